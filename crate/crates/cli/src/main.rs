fn main() {
    let args: Vec<String> = std::env::args().collect();
    let status = levelfit_cli::run(args, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(status);
}
