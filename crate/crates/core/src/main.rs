use std::io::{self, BufWriter, Write};
use std::process;

fn main() {
    let stdin = io::stdin();
    let mut stdout = BufWriter::new(io::stdout().lock());
    let code = macanon::cli::run(
        std::env::args_os(),
        &mut stdin.lock(),
        &mut stdout,
        &mut io::stderr().lock(),
    );
    if stdout.flush().is_err() && code == 0 {
        process::exit(macanon::cli::EXIT_RUNTIME);
    }
    process::exit(code);
}
