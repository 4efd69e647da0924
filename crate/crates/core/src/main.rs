use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let code = microsplit::cli::run(std::env::args(), &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(code as u8)
}
