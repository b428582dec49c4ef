use std::process::exit;

fn main() {
    exit(ccportfolio::cli::run(std::env::args_os()));
}
