//! Multimodal token layout: `N` frames of `P` visual tokens each, followed by
//! `T` text tokens.
//!
//! Absolute indices run `0..S` with `S = N*P + T`. Video occupies `[0, N*P)`
//! and text occupies `[N*P, S)`. Position ids used by the model are these
//! absolute indices.

use serde::{Deserialize, Serialize};

use crate::error::{KnockoutError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenLayout {
    num_frames: usize,
    tokens_per_frame: usize,
    text_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenRole {
    Video { frame: usize, local: usize },
    Text { offset: usize },
}

impl TokenRole {
    pub fn is_video(&self) -> bool {
        matches!(self, TokenRole::Video { .. })
    }

    pub fn is_text(&self) -> bool {
        matches!(self, TokenRole::Text { .. })
    }
}

impl TokenLayout {
    pub fn new(num_frames: usize, tokens_per_frame: usize, text_len: usize) -> Result<Self> {
        if num_frames == 0 {
            return Err(KnockoutError::InvalidLayout("at least one frame is required".into()));
        }
        if tokens_per_frame == 0 {
            return Err(KnockoutError::InvalidLayout(
                "frames must hold at least one token".into(),
            ));
        }
        num_frames
            .checked_mul(tokens_per_frame)
            .and_then(|v| v.checked_add(text_len))
            .ok_or_else(|| KnockoutError::InvalidLayout("sequence length overflows".into()))?;
        Ok(Self { num_frames, tokens_per_frame, text_len })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.tokens_per_frame
    }

    pub fn text_len(&self) -> usize {
        self.text_len
    }

    /// Number of visual tokens, `N*P`.
    pub fn video_len(&self) -> usize {
        self.num_frames * self.tokens_per_frame
    }

    pub fn total_len(&self) -> usize {
        self.video_len() + self.text_len
    }

    pub fn video_span(&self) -> std::ops::Range<usize> {
        0..self.video_len()
    }

    pub fn text_span(&self) -> std::ops::Range<usize> {
        self.video_len()..self.total_len()
    }

    pub fn frame_span(&self, frame: usize) -> std::ops::Range<usize> {
        let start = frame * self.tokens_per_frame;
        start..start + self.tokens_per_frame
    }

    pub fn role_of(&self, index: usize) -> Result<TokenRole> {
        if index >= self.total_len() {
            return Err(KnockoutError::OutOfBounds { index, len: self.total_len() });
        }
        Ok(self.role_unchecked(index))
    }

    /// Role lookup without the bounds check. Indices past the end are
    /// reported as text.
    #[inline]
    pub(crate) fn role_unchecked(&self, index: usize) -> TokenRole {
        let video = self.video_len();
        if index < video {
            TokenRole::Video {
                frame: index / self.tokens_per_frame,
                local: index % self.tokens_per_frame,
            }
        } else {
            TokenRole::Text { offset: index - video }
        }
    }

    pub fn index_of(&self, role: TokenRole) -> Result<usize> {
        let index = match role {
            TokenRole::Video { frame, local }
                if frame < self.num_frames && local < self.tokens_per_frame =>
            {
                frame * self.tokens_per_frame + local
            }
            TokenRole::Text { offset } if offset < self.text_len => self.video_len() + offset,
            _ => {
                return Err(KnockoutError::InvalidLayout(format!(
                    "{role:?} does not fit in {self}"
                )))
            }
        };
        Ok(index)
    }

    #[inline]
    pub fn is_video(&self, index: usize) -> bool {
        index < self.video_len()
    }

    /// Frame of a video index; `None` for text.
    #[inline]
    pub fn frame_of(&self, index: usize) -> Option<usize> {
        self.is_video(index).then(|| index / self.tokens_per_frame)
    }
}

impl std::fmt::Display for TokenLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} frames x {} tokens + {} text",
            self.num_frames, self.tokens_per_frame, self.text_len
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_scale_layout() {
        let layout = TokenLayout::new(32, 196, 100).unwrap();
        assert_eq!(layout.total_len(), 6372);
        assert_eq!(layout.video_span(), 0..6272);
    }

    #[test]
    fn minimal_layout() {
        assert_eq!(TokenLayout::new(1, 1, 0).unwrap().total_len(), 1);
    }

    #[test]
    fn rejects_empty_frames() {
        assert!(matches!(TokenLayout::new(0, 4, 2), Err(KnockoutError::InvalidLayout(_))));
        assert!(matches!(TokenLayout::new(3, 0, 2), Err(KnockoutError::InvalidLayout(_))));
    }

    #[test]
    fn roles_on_small_layout() {
        let layout = TokenLayout::new(3, 4, 2).unwrap();
        assert_eq!(layout.role_of(7).unwrap(), TokenRole::Video { frame: 1, local: 3 });
        assert_eq!(layout.role_of(11).unwrap(), TokenRole::Video { frame: 2, local: 3 });
        assert_eq!(layout.role_of(12).unwrap(), TokenRole::Text { offset: 0 });
        assert!(matches!(
            layout.role_of(14),
            Err(KnockoutError::OutOfBounds { index: 14, len: 14 })
        ));
    }

    #[test]
    fn brute_force_bijection() {
        // Enumerate roles in sequence order independently of role_of.
        let layout = TokenLayout::new(3, 4, 2).unwrap();
        let mut expected = Vec::new();
        for frame in 0..3 {
            for local in 0..4 {
                expected.push(TokenRole::Video { frame, local });
            }
        }
        for offset in 0..2 {
            expected.push(TokenRole::Text { offset });
        }
        for (i, role) in expected.into_iter().enumerate() {
            assert_eq!(layout.role_of(i).unwrap(), role);
            assert_eq!(layout.index_of(role).unwrap(), i);
        }
    }

    #[test]
    fn index_of_rejects_foreign_roles() {
        let layout = TokenLayout::new(2, 2, 1).unwrap();
        assert!(layout.index_of(TokenRole::Video { frame: 2, local: 0 }).is_err());
        assert!(layout.index_of(TokenRole::Video { frame: 0, local: 2 }).is_err());
        assert!(layout.index_of(TokenRole::Text { offset: 1 }).is_err());
    }
}
