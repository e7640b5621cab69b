fn main() -> std::process::ExitCode {
    dtfusion::cli::run(std::env::args_os())
}
