use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let env_seed = std::env::var(autolabel::config::SEED_ENV).ok();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = autolabel::cli::run(std::env::args_os(), env_seed.as_deref(), &mut out);
    let _ = out.flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("autolabel: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
