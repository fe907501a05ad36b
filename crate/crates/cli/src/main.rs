use brlogic_cli::commands::{run, Cli};
use clap::Parser;
use std::process::exit;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            exit(code);
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{}", out.text);
            exit(out.exit_code());
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit(e.exit_code());
        }
    }
}
