use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use orsim_cli::{run, Cli, CliError};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.out {
        Some(path) => File::create(path)
            .map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })
            .and_then(|f| {
                let mut w = BufWriter::new(f);
                run(&cli, &mut w)?;
                w.flush()?;
                Ok(())
            }),
        None => {
            let mut w = io::stdout().lock();
            run(&cli, &mut w).and_then(|()| Ok(w.flush()?))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("orsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
