fn main() {
    std::process::exit(muse_cli::main_from_args(std::env::args_os()));
}
