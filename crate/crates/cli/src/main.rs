use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = designnav_cli::commands::Cli::parse();
    if let Err(e) = designnav_cli::commands::run(cli) {
        let closed_pipe = e
            .downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe);
        if !closed_pipe {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
