use clap::Parser;

fn main() {
    let cli = qtranspile::Cli::parse();
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = qtranspile::run(cli, &mut stdout) {
        let kind = if e.exit_code() == 2 { "io" } else { "validation" };
        eprintln!("{}", serde_json::json!({ "error": kind, "message": e.to_string() }));
        std::process::exit(e.exit_code());
    }
}
