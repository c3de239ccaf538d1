use clap::Parser;

fn main() {
    let cli = ellnav_cli::Cli::parse();
    let code = ellnav_cli::run(cli, &mut std::io::stdout());
    std::process::exit(code);
}
