fn main() -> std::process::ExitCode {
    wdkg_cli::execute(std::env::args_os())
}
