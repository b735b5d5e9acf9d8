use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = regcert::Cli::parse();
    if let Err(e) = regcert::run(cli) {
        let msg = e.to_string();
        eprintln!("error: {msg}");
        let mut source = std::error::Error::source(&e);
        while let Some(s) = source {
            let cause = s.to_string();
            if !msg.contains(&cause) {
                eprintln!("  caused by: {cause}");
            }
            source = s.source();
        }
        std::process::exit(e.exit_code());
    }
}
