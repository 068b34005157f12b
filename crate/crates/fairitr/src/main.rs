fn main() -> std::process::ExitCode {
    fairitr::cli::main()
}
