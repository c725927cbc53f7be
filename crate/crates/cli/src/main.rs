fn main() {
    std::process::exit(cvqboost_cli::dispatch(std::env::args_os()));
}
