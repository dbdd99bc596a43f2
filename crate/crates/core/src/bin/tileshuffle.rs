fn main() {
    std::process::exit(tileshuffle::cli::run_cli(std::env::args_os()));
}
