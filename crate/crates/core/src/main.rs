fn main() -> std::process::ExitCode {
    dimorph::cli::main_with_args(std::env::args_os())
}
