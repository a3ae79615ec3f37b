use std::process::ExitCode;

fn main() -> ExitCode {
    maskbench::main_with_args(std::env::args_os())
}
