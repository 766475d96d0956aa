use std::process::ExitCode;

fn main() -> ExitCode {
    siren_gateway::cli::main()
}
