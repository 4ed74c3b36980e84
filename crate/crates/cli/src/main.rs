fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(recon_cli::run(&args));
}
