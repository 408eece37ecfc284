fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Err(e) = gatbind_cli::run(std::env::args_os()) {
        eprintln!("gatbind: {e}");
        std::process::exit(e.exit_code());
    }
}
