use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Ok(threads) = std::env::var("FEDRANK_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: FEDRANK_THREADS must be a positive integer");
                return ExitCode::from(1);
            }
        }
    }
    ExitCode::from(fedrank::cli::run_cli(std::env::args_os()) as u8)
}
