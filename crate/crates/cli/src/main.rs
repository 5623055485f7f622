use std::io;
use std::process;

use clap::Parser;
use obfuskit_cli::commands::run;
use obfuskit_cli::{Cli, ExitCode};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors share the parse-error status; help and version succeed
            process::exit(if e.use_stderr() { ExitCode::Parse as i32 } else { 0 });
        }
    };
    let code = match run(&cli, &mut io::stdout().lock(), &mut io::stderr().lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    process::exit(code as i32);
}
