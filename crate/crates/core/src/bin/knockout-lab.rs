fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(knockout_lab::cli::main_with_args(&argv));
}
