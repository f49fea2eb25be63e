fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut stdout = std::io::BufWriter::new(std::io::stdout());
    let code = boxvis::cli::run(std::env::args_os(), &mut stdout, &mut std::io::stderr());
    if let Err(e) = std::io::Write::flush(&mut stdout) {
        eprintln!("error: stdout: {e}");
        std::process::exit(boxvis::cli::EXIT_IO);
    }
    std::process::exit(code);
}
