use clap::Parser;

fn main() {
    let cli = ifpt_cli::Cli::parse();
    let code = ifpt_cli::main_with(cli, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
