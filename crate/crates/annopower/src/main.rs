use std::process::ExitCode;

fn main() -> ExitCode {
    annopower::cli::main()
}
