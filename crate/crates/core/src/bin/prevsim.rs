use std::process::ExitCode;

fn main() -> ExitCode {
    match prevsim::cli::main_with_args(std::env::args_os()) {
        Ok(Some(dir)) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(prevsim::cli::CliError::Usage(msg)) if msg.starts_with("Usage") || msg.contains("--help") => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
