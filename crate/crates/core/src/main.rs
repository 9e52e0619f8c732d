fn main() {
    modeplan::cli::init_logging();
    std::process::exit(modeplan::cli::run(std::env::args_os()));
}
