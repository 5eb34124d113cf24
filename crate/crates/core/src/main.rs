fn main() {
    std::process::exit(dqnav::cli::main_with_args(std::env::args_os()));
}
