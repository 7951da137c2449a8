fn main() -> std::process::ExitCode {
    spheretopic_app::cli::main_entry()
}
