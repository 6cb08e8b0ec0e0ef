use clap::Parser;
use tki_cli::{emit, run, Cli, EXIT_USAGE};

fn main() {
    // clap exits with 2 on bad arguments, which would read as a disagreement.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            std::process::exit(EXIT_USAGE);
        }
    }
    let code = match run(&cli).and_then(|o| emit(&o).map(|_| o.code)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    };
    std::process::exit(code);
}
