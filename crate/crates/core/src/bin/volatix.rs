fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VOLATIX_LOG", "warn")).init();
    std::process::exit(volatix::cli::run(std::env::args_os()));
}
