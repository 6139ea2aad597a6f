//! Per-layer knockout schedules and the constructors for each investigation
//! protocol. Layers are numbered from 1.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::KnockoutType;
use crate::error::{KnockoutError, Result};

pub const DEFAULT_WINDOW_LEN: usize = 4;

/// Knockout assignment for every layer, plus an optional early-exit layer
/// after which video tokens leave the computation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayerSchedule {
    per_layer: Vec<KnockoutType>,
    exit_layer: Option<usize>,
}

impl LayerSchedule {
    pub fn new(per_layer: Vec<KnockoutType>, exit_layer: Option<usize>) -> Result<Self> {
        if per_layer.is_empty() {
            return Err(KnockoutError::InvalidSchedule("schedule needs at least one layer".into()));
        }
        if let Some(e) = exit_layer {
            if e == 0 || e > per_layer.len() {
                return Err(KnockoutError::InvalidSchedule(format!(
                    "exit layer {e} outside 1..={}",
                    per_layer.len()
                )));
            }
        }
        Ok(Self { per_layer, exit_layer })
    }

    /// Every layer unmodified.
    pub fn baseline(depth: usize) -> Result<Self> {
        Self::new(vec![KnockoutType::NoKnockout; depth], None)
    }

    pub fn depth(&self) -> usize {
        self.per_layer.len()
    }

    pub fn per_layer(&self) -> &[KnockoutType] {
        &self.per_layer
    }

    pub fn exit_layer(&self) -> Option<usize> {
        self.exit_layer
    }

    /// Knockout of 1-based `layer`.
    pub fn knockout_at(&self, layer: usize) -> KnockoutType {
        self.per_layer[layer - 1]
    }

    /// Whether video tokens are still part of the computation at `layer`.
    pub fn video_present(&self, layer: usize) -> bool {
        self.exit_layer.is_none_or(|e| layer <= e)
    }

    pub fn is_baseline(&self) -> bool {
        self.exit_layer.is_none() && self.per_layer.iter().all(|&k| k == KnockoutType::NoKnockout)
    }

    /// Fraction of layers in which text can still read video: the layer is
    /// not LVK and video has not exited yet.
    pub fn layer_ratio(&self) -> f64 {
        let retained = (1..=self.depth())
            .filter(|&l| self.video_present(l) && self.knockout_at(l) != KnockoutType::Lvk)
            .count();
        retained as f64 / self.depth() as f64
    }

    pub fn with_knockout(&self, layer: usize, kt: KnockoutType) -> Result<Self> {
        if layer == 0 || layer > self.depth() {
            return Err(KnockoutError::InvalidSchedule(format!(
                "layer {layer} outside 1..={}",
                self.depth()
            )));
        }
        let mut per_layer = self.per_layer.clone();
        per_layer[layer - 1] = kt;
        Self::new(per_layer, self.exit_layer)
    }
}

impl std::fmt::Display for LayerSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, kt) in self.per_layer.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", kt.symbol())?;
        }
        if let Some(e) = self.exit_layer {
            write!(f, " exit={e}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for LayerSchedule {
    type Err = KnockoutError;

    /// Parses `N N L L exit=3`. Layer codes may also be run together
    /// (`NNLL`) or separated by commas.
    fn from_str(s: &str) -> Result<Self> {
        let err = |reason: String| KnockoutError::ScheduleParse { input: s.to_string(), reason };
        let mut per_layer = Vec::new();
        let mut exit = None;
        for word in s.split(|c: char| c.is_whitespace() || c == ',').filter(|w| !w.is_empty()) {
            if let Some(value) = word.strip_prefix("exit=") {
                if exit.is_some() {
                    return Err(err("exit given twice".into()));
                }
                let e = value
                    .parse::<usize>()
                    .map_err(|_| err(format!("bad exit layer {value:?}")))?;
                exit = Some(e);
                continue;
            }
            if exit.is_some() {
                return Err(err("layer codes must precede exit=".into()));
            }
            for c in word.chars() {
                let kt = KnockoutType::from_symbol(c)
                    .ok_or_else(|| err(format!("unknown layer code {c:?}")))?;
                per_layer.push(kt);
            }
        }
        LayerSchedule::new(per_layer, exit).map_err(|e| err(e.to_string()))
    }
}

impl Serialize for LayerSchedule {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LayerSchedule {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Text may read video through layer `cutoff` only; LVK on every deeper
/// layer. `cutoff == depth` is the baseline.
pub fn schedule_global1(depth: usize, cutoff: usize) -> Result<LayerSchedule> {
    if cutoff == 0 || cutoff > depth {
        return Err(KnockoutError::InvalidSchedule(format!(
            "cutoff {cutoff} outside 1..={depth}"
        )));
    }
    let per_layer = (1..=depth)
        .map(|j| if j <= cutoff { KnockoutType::NoKnockout } else { KnockoutType::Lvk })
        .collect();
    LayerSchedule::new(per_layer, None)
}

/// The same knockout on every layer.
pub fn schedule_global2(depth: usize, kt: KnockoutType) -> Result<LayerSchedule> {
    if kt == KnockoutType::NoKnockout {
        return Err(KnockoutError::InvalidSchedule(
            "global setting 2 needs a knockout; use cutoff = depth for the baseline".into(),
        ));
    }
    if depth == 0 {
        return Err(KnockoutError::InvalidSchedule("depth must be at least 1".into()));
    }
    LayerSchedule::new(vec![kt; depth], None)
}

/// `kt` on the `window_len` layers ending at `window_end`, nothing elsewhere.
pub fn schedule_window(
    depth: usize,
    kt: KnockoutType,
    window_end: usize,
    window_len: usize,
) -> Result<LayerSchedule> {
    if window_len == 0 {
        return Err(KnockoutError::InvalidSchedule("window length must be at least 1".into()));
    }
    if window_end < window_len || window_end > depth {
        return Err(KnockoutError::InvalidSchedule(format!(
            "window end {window_end} outside {window_len}..={depth}"
        )));
    }
    let start = window_end - window_len + 1;
    let per_layer = (1..=depth)
        .map(|p| if (start..=window_end).contains(&p) { kt } else { KnockoutType::NoKnockout })
        .collect();
    LayerSchedule::new(per_layer, None)
}

/// Spatial-only video attention (VTK) on layers `1..=spatial_window_end`,
/// full attention up to `exit_layer`, video removed afterwards. Layers past
/// the exit are marked LVK, which is what removal amounts to for text.
///
/// Exiting after the last layer removes nothing, so `exit_layer == depth`
/// yields a schedule without an exit.
pub fn schedule_efficiency(
    depth: usize,
    spatial_window_end: usize,
    exit_layer: usize,
) -> Result<LayerSchedule> {
    if spatial_window_end > exit_layer {
        return Err(KnockoutError::InvalidSchedule(format!(
            "spatial window end {spatial_window_end} is past exit layer {exit_layer}"
        )));
    }
    if exit_layer == 0 || exit_layer > depth {
        return Err(KnockoutError::InvalidSchedule(format!(
            "exit layer {exit_layer} outside 1..={depth}"
        )));
    }
    let per_layer = (1..=depth)
        .map(|l| {
            if l <= spatial_window_end {
                KnockoutType::Vtk
            } else if l <= exit_layer {
                KnockoutType::NoKnockout
            } else {
                KnockoutType::Lvk
            }
        })
        .collect();
    let exit = (exit_layer < depth).then_some(exit_layer);
    LayerSchedule::new(per_layer, exit)
}

/// Cutoffs for the global setting 1 sweep: odd layers `1, 3, 5, ...` plus
/// `depth` itself, ascending.
pub fn cutoff_grid(depth: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (1..=depth).step_by(2).collect();
    if grid.last() != Some(&depth) {
        grid.push(depth);
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use KnockoutType::*;

    #[test]
    fn global1_boundaries() {
        assert!(schedule_global1(28, 28).unwrap().is_baseline());
        let s = schedule_global1(28, 1).unwrap();
        assert_eq!(s.knockout_at(1), NoKnockout);
        assert!((2..=28).all(|l| s.knockout_at(l) == Lvk));
        assert!((schedule_global1(28, 17).unwrap().layer_ratio() - 17.0 / 28.0).abs() < 1e-12);
        assert!(schedule_global1(28, 0).is_err());
        assert!(schedule_global1(28, 29).is_err());
    }

    #[test]
    fn global2_all_layers() {
        assert_eq!(schedule_global2(28, Lvk).unwrap().per_layer(), &[Lvk; 28]);
        assert_eq!(schedule_global2(1, Vsk).unwrap().per_layer(), &[Vsk]);
        assert_eq!(schedule_global2(4, Vtk).unwrap().to_string(), "T T T T");
        assert!(schedule_global2(4, NoKnockout).is_err());
    }

    fn knocked(s: &LayerSchedule) -> Vec<usize> {
        (1..=s.depth()).filter(|&l| s.knockout_at(l) != NoKnockout).collect()
    }

    #[test]
    fn window_layers() {
        assert_eq!(knocked(&schedule_window(28, Lvk, 4, 4).unwrap()), vec![1, 2, 3, 4]);
        assert_eq!(knocked(&schedule_window(28, Vtk, 28, 4).unwrap()), vec![25, 26, 27, 28]);
        assert_eq!(knocked(&schedule_window(28, Vsk, 16, 4).unwrap()), vec![13, 14, 15, 16]);
        assert!(schedule_window(28, Lvk, 3, 4).is_err());
        assert!(schedule_window(28, Lvk, 29, 4).is_err());
        assert!(schedule_window(28, Lvk, 5, 0).is_err());
    }

    #[test]
    fn efficiency_configurations() {
        let both = schedule_efficiency(28, 8, 18).unwrap();
        assert_eq!(both.exit_layer(), Some(18));
        assert!((1..=8).all(|l| both.knockout_at(l) == Vtk));
        assert!((9..=18).all(|l| both.knockout_at(l) == NoKnockout));
        assert!((19..=28).all(|l| both.knockout_at(l) == Lvk));
        assert!(both.video_present(18) && !both.video_present(19));

        let exit_only = schedule_efficiency(28, 0, 18).unwrap();
        assert_eq!(knocked(&exit_only), (19..=28).collect::<Vec<_>>());

        assert_eq!(schedule_efficiency(28, 0, 28).unwrap(), schedule_global1(28, 28).unwrap());
        assert!(schedule_efficiency(28, 9, 8).is_err());
        assert!(schedule_efficiency(28, 0, 0).is_err());
    }

    #[test]
    fn grid_includes_depth() {
        let grid = cutoff_grid(28);
        assert_eq!(grid.len(), 15);
        assert_eq!(grid.first(), Some(&1));
        assert_eq!(grid[13], 27);
        assert_eq!(grid.last(), Some(&28));
        assert_eq!(cutoff_grid(5), vec![1, 3, 5]);
        assert_eq!(cutoff_grid(1), vec![1]);
    }

    #[test]
    fn parse_and_render() {
        let s: LayerSchedule = "N N N L L exit=3".parse().unwrap();
        assert_eq!(s.per_layer(), &[NoKnockout, NoKnockout, NoKnockout, Lvk, Lvk]);
        assert_eq!(s.exit_layer(), Some(3));
        assert_eq!(s.to_string(), "N N N L L exit=3");
        assert_eq!("nntS".parse::<LayerSchedule>().unwrap().to_string(), "N N T S");
        for bad in ["", "N X", "N N exit=3", "N exit=0", "N exit=1 exit=1", "exit=1 N", "N exit=a"] {
            assert!(
                matches!(bad.parse::<LayerSchedule>(), Err(KnockoutError::ScheduleParse { .. })),
                "{bad:?} parsed"
            );
        }
    }

    #[test]
    fn layer_ratio_counts_exit() {
        let s = schedule_efficiency(28, 8, 18).unwrap();
        assert!((s.layer_ratio() - 18.0 / 28.0).abs() < 1e-12);
    }
}
