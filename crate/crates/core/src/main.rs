fn main() -> std::process::ExitCode {
    oriented_walk::cli::main_from_args(std::env::args_os())
}
