fn main() -> std::process::ExitCode {
    hdsa::cli::main()
}
