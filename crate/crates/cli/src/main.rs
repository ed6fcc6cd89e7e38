use clap::Parser;

fn main() -> std::process::ExitCode {
    let cli = antitangle_cli::Cli::parse();
    match antitangle_cli::execute(cli, &mut std::io::stdout()) {
        Ok(true) => std::process::ExitCode::SUCCESS,
        Ok(false) => std::process::ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::from(2)
        }
    }
}
