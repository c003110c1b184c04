use std::process::ExitCode;

fn main() -> ExitCode {
    nitcg::cli::main()
}
