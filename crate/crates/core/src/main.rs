fn main() -> std::process::ExitCode {
    symradio::cli::main(std::env::args_os())
}
