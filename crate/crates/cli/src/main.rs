fn main() {
    if let Err(e) = linkprobe_cli::run(std::env::args_os()) {
        eprintln!("{}", e.json_line());
        std::process::exit(e.exit_code());
    }
}
