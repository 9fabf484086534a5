fn main() -> std::process::ExitCode {
    roboformer::cli::main()
}
