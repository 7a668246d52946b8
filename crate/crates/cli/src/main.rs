fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("MECMFG_LOG")).init();
    std::process::exit(mecmfg_cli::main_with_args(std::env::args_os()));
}
