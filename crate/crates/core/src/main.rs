fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(coopv2x::cli::run(&args));
}
