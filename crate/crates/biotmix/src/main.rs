use std::process::exit;

fn main() {
    exit(biotmix::cli::main_entry(std::env::args_os()));
}
