fn main() -> std::process::ExitCode {
    outbreak_lab::main_entry()
}
