use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use axum::Router;
use clap::{Args, Parser, Subcommand};
use futures::{stream, StreamExt};
use vaultline_core::{derive_key, generate_synthetic, InstanceCredentials};
use vaultline_harness::{
    check, emit_report, parse_rows, run_benchmark, run_recovery_drill, sever_data_host, AttackTarget,
    BenchParams, CostReport, DrillReport, EnvOptions, Environment, Format, ROWS_PREFIX,
};
use vaultline_healthapp::{AppClient, AppConfig, HealthApp};
use vaultline_net::{self_signed_pem, ServiceHost, TlsSettings};
use vaultline_registry::{Registry, RegistryClient};
use vaultline_storage::{datahost_router, BackendKind, DataHost, StorageError};
use vaultline_vault::{router as vault_router, CachingVerifier, VaultStore};

#[derive(Parser)]
#[command(
    name = "vaultline",
    version,
    about = "Vaultline services, benchmarks and attack drills"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic patients as JSON lines, or post them to an app.
    Seed {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Create the patients through a running application instead.
        #[arg(long)]
        app: Option<String>,
        #[arg(long)]
        ca_file: Option<PathBuf>,
    },
    /// Measure create/fetch costs per approach.
    Bench {
        #[arg(long, default_value = "all")]
        backend: Selection,
        #[arg(long, default_value_t = vaultline_harness::bench::DEFAULT_CREATES)]
        creates: usize,
        #[arg(long, default_value_t = vaultline_harness::bench::DEFAULT_FETCHES)]
        fetches: usize,
        /// 10M creates and 1M fetches.
        #[arg(long, conflicts_with_all = ["creates", "fetches"])]
        full: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Patients in the recovery drill that fills the recoverability
        /// column; 0 skips it.
        #[arg(long, default_value_t = 100)]
        drill_patients: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        env: EnvArgs,
    },
    /// Attack one host while an instance is working, then restore it.
    Attack {
        #[arg(long)]
        target: AttackTarget,
        #[arg(long, default_value = "all")]
        backend: Selection,
        /// Operations completed before the attack starts.
        #[arg(long, default_value_t = 50)]
        start_after: u64,
        /// Operations attempted while the host is down.
        #[arg(long, default_value_t = 20)]
        ops: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        env: EnvArgs,
    },
    /// Lose the application host and try to recover the instance.
    Drill {
        #[arg(long, default_value = "all")]
        backend: Selection,
        #[arg(long, default_value_t = 1000)]
        patients: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        env: EnvArgs,
    },
    /// Render benchmark output.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long, default_value = "text")]
        format: Format,
        /// Exit nonzero if the cost structure or a verdict is off.
        #[arg(long)]
        check: bool,
    },
    /// Run one service in the foreground.
    Serve {
        #[command(subcommand)]
        service: Service,
    },
    /// Print the hex record key for a set of credentials.
    DeriveKey {
        #[arg(long)]
        instance_id: String,
        #[arg(long)]
        license_key: String,
        #[arg(long, default_value_t = vaultline_core::kdf::DEFAULT_ITERATIONS)]
        iterations: u32,
    },
    /// Write a self-signed certificate and key.
    GenCert {
        #[arg(long = "host", default_values_t = ["localhost".to_string(), "127.0.0.1".to_string()])]
        hosts: Vec<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum Service {
    Registry {
        #[arg(long, default_value = "127.0.0.1:7100")]
        listen: SocketAddr,
        #[arg(long)]
        file: PathBuf,
        #[arg(long, env = "VAULTLINE_ADMIN_TOKEN")]
        admin_token: String,
        #[command(flatten)]
        tls: TlsArgs,
    },
    /// The vault plus the file share and database of the remote approaches.
    DataHost {
        #[arg(long, default_value = "127.0.0.1:7200")]
        listen: SocketAddr,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        registry_url: String,
        #[command(flatten)]
        tls: TlsArgs,
    },
    App {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct TlsArgs {
    #[arg(long, requires = "tls_key")]
    tls_cert: Option<PathBuf>,
    #[arg(long, requires = "tls_cert")]
    tls_key: Option<PathBuf>,
    /// Root certificate to trust when calling other services.
    #[arg(long)]
    tls_ca: Option<PathBuf>,
}

impl TlsArgs {
    fn settings(&self) -> TlsSettings {
        TlsSettings {
            enabled: self.tls_cert.is_some(),
            cert_file: self.tls_cert.clone(),
            key_file: self.tls_key.clone(),
            ca_file: self.tls_ca.clone(),
        }
    }
}

#[derive(Args)]
struct EnvArgs {
    /// Keep the deployment's state here instead of a temporary directory.
    #[arg(long)]
    root: Option<PathBuf>,
    #[arg(long)]
    tls: bool,
    #[arg(long, default_value_t = vaultline_core::kdf::DEFAULT_ITERATIONS)]
    kdf_iterations: u32,
}

impl EnvArgs {
    async fn start(&self) -> anyhow::Result<Environment> {
        Environment::start(EnvOptions {
            root: self.root.clone(),
            tls: self.tls,
            kdf_iterations: self.kdf_iterations,
            ..EnvOptions::default()
        })
        .await
    }
}

#[derive(Clone, Copy)]
enum Selection {
    All,
    One(BackendKind),
}

impl std::str::FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            Ok(Selection::All)
        } else {
            s.parse().map(Selection::One).map_err(|e: String| e)
        }
    }
}

impl Selection {
    fn kinds(self) -> Vec<BackendKind> {
        match self {
            Selection::All => BackendKind::ALL.to_vec(),
            Selection::One(k) => vec![k],
        }
    }
}

fn write_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> anyhow::Result<()> {
    if let Some(path) = out {
        let mut json = serde_json::to_vec_pretty(value)?;
        json.push(b'\n');
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn verdict_code(problems: &[String], check: bool) -> ExitCode {
    for p in problems {
        eprintln!("mismatch: {p}");
    }
    if check && !problems.is_empty() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

async fn seed_cmd(
    count: usize,
    seed: u64,
    out: Option<PathBuf>,
    app: Option<String>,
    ca: Option<PathBuf>,
) -> anyhow::Result<()> {
    let records = generate_synthetic(count, seed);
    if let Some(url) = app {
        let tls = TlsSettings {
            ca_file: ca,
            ..TlsSettings::default()
        };
        let api = AppClient::new(url, tls.client()?);
        let failures: Vec<_> = stream::iter(&records)
            .map(|r| api.create(r))
            .buffer_unordered(16)
            .filter_map(|r| async move { r.err() })
            .collect()
            .await;
        if let Some(e) = failures.first() {
            anyhow::bail!("{} of {count} creates failed, first: {e}", failures.len());
        }
        eprintln!("created {count} patients");
        return Ok(());
    }
    let mut sink: Box<dyn Write> = match out {
        Some(path) => Box::new(std::io::BufWriter::new(std::fs::File::create(path)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    for r in &records {
        serde_json::to_writer(&mut sink, r)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
async fn bench_cmd(
    selection: Selection,
    params: BenchParams,
    drill_patients: usize,
    out: Option<PathBuf>,
    check_mode: bool,
    env: &EnvArgs,
) -> anyhow::Result<ExitCode> {
    let env = env.start().await?;
    let mut rows: Vec<CostReport> = Vec::new();
    for kind in selection.kinds() {
        let mut row = run_benchmark(&env, kind, &params).await?;
        if drill_patients > 0 {
            let drill = run_recovery_drill(&env, kind, drill_patients, params.seed).await?;
            row.recoverability = Some(drill.verdict);
        }
        rows.push(row);
    }
    write_json(out.as_deref(), &rows)?;
    print!("{}", emit_report(rows.clone(), Format::Text)?);
    Ok(verdict_code(&check(&rows), check_mode))
}

#[derive(serde::Serialize)]
struct SeveranceReport {
    kind: BackendKind,
    before: u64,
    failed_while_down: u64,
    unavailable_while_down: u64,
    after_restore_ok: bool,
}

async fn attack_cmd(
    target: AttackTarget,
    selection: Selection,
    start_after: u64,
    ops: u64,
    seed: u64,
    check_mode: bool,
    env: &EnvArgs,
) -> anyhow::Result<ExitCode> {
    let mut env = env.start().await?;
    let mut problems = Vec::new();
    for kind in selection.kinds() {
        match target {
            AttackTarget::AppHost => {
                let report = run_recovery_drill(&env, kind, start_after as usize, seed).await?;
                println!("{}", serde_json::to_string(&report)?);
                if !report.matches_expected() {
                    problems.push(format!(
                        "{kind}: {:?}, expected {:?}",
                        report.verdict, report.expected
                    ));
                }
            }
            AttackTarget::DataHost => {
                let app = env
                    .start_app(kind, &format!("attack-{kind}-{seed}"), None)
                    .await?;
                let backend = app.backend();
                let records = generate_synthetic((start_after + ops + 1) as usize, seed);
                let (early, rest) = records.split_at(start_after as usize);
                for r in early {
                    backend.create(r).await?;
                }
                let severance = sever_data_host(&mut env).await?;
                let (mut failed, mut unavailable) = (0, 0);
                for r in &rest[..ops as usize] {
                    if let Err(e) = backend.create(r).await {
                        failed += 1;
                        if matches!(e, StorageError::BackendUnavailable(_)) {
                            unavailable += 1;
                        }
                    }
                }
                severance.restore(&mut env).await?;
                let after_restore_ok = backend.create(&rest[ops as usize]).await.is_ok();
                let report = SeveranceReport {
                    kind,
                    before: start_after,
                    failed_while_down: failed,
                    unavailable_while_down: unavailable,
                    after_restore_ok,
                };
                println!("{}", serde_json::to_string(&report)?);
                let expect_failures = if kind.is_remote() { ops } else { 0 };
                if unavailable != expect_failures || failed != expect_failures || !after_restore_ok {
                    problems.push(format!("{kind}: {failed} failed while the data host was down"));
                }
            }
        }
    }
    Ok(verdict_code(&problems, check_mode))
}

async fn drill_cmd(
    selection: Selection,
    patients: usize,
    seed: u64,
    out: Option<PathBuf>,
    check_mode: bool,
    env: &EnvArgs,
) -> anyhow::Result<ExitCode> {
    let env = env.start().await?;
    let mut reports: Vec<DrillReport> = Vec::new();
    let mut problems = Vec::new();
    for kind in selection.kinds() {
        let report = run_recovery_drill(&env, kind, patients, seed).await?;
        println!(
            "{:<24} {} ({}/{} restored, {:.0} ms)",
            kind.as_str(),
            report.verdict,
            report.restored,
            report.n_patients,
            report.recovery_ms
        );
        if !report.matches_expected() {
            problems.push(format!(
                "{kind}: {:?}, expected {:?}",
                report.verdict, report.expected
            ));
        }
        reports.push(report);
    }
    write_json(out.as_deref(), &reports)?;
    Ok(verdict_code(&problems, check_mode))
}

fn report_cmd(inputs: &[PathBuf], format: Format, check_mode: bool) -> anyhow::Result<ExitCode> {
    let mut rows = Vec::new();
    for path in inputs {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        rows.extend(parse_rows(&text).with_context(|| format!("parsing {}", path.display()))?);
    }
    print!("{}", emit_report(rows.clone(), format)?);
    Ok(verdict_code(&check(&rows), check_mode))
}

async fn serve_cmd(service: Service) -> anyhow::Result<()> {
    match service {
        Service::Registry {
            listen,
            file,
            admin_token,
            tls,
        } => {
            let registry = Arc::new(Registry::open(&file, &admin_token)?);
            let tls = tls.settings().server_config().await?;
            let host =
                ServiceHost::start("registry", vaultline_registry::router(registry), listen, tls).await?;
            log::info!("registry listening on {}", host.base_url());
            host.wait().await?;
        }
        Service::DataHost {
            listen,
            dir,
            registry_url,
            tls,
        } => {
            let settings = tls.settings();
            let vault = Arc::new(VaultStore::open(dir.join("vault"))?);
            let registry = RegistryClient::with_tls(registry_url, &settings)?;
            let rows = Arc::new(DataHost::new(dir.join("rows")));
            let app = Router::new()
                .nest(ROWS_PREFIX, datahost_router(rows))
                .merge(vault_router(vault, Arc::new(CachingVerifier::new(registry))));
            let host = ServiceHost::start("data-host", app, listen, settings.server_config().await?).await?;
            log::info!("data host listening on {}", host.base_url());
            host.wait().await?;
        }
        Service::App { config } => {
            let app = HealthApp::start(AppConfig::load(&config)?).await?;
            log::info!(
                "instance {} listening on {}",
                app.creds().instance_id,
                app.base_url()
            );
            app.wait().await?;
        }
    }
    Ok(())
}

async fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Seed {
            count,
            seed,
            out,
            app,
            ca_file,
        } => seed_cmd(count, seed, out, app, ca_file)
            .await
            .map(|_| ExitCode::SUCCESS),
        Command::Bench {
            backend,
            creates,
            fetches,
            full,
            seed,
            workers,
            drill_patients,
            out,
            check,
            env,
        } => {
            let (creates, fetches) = if full {
                (10_000_000, 1_000_000)
            } else {
                (creates, fetches)
            };
            let params = BenchParams {
                creates,
                fetches,
                seed,
                workers,
            };
            bench_cmd(backend, params, drill_patients, out, check, &env).await
        }
        Command::Attack {
            target,
            backend,
            start_after,
            ops,
            seed,
            check,
            env,
        } => attack_cmd(target, backend, start_after, ops, seed, check, &env).await,
        Command::Drill {
            backend,
            patients,
            seed,
            out,
            check,
            env,
        } => drill_cmd(backend, patients, seed, out, check, &env).await,
        Command::Report { input, format, check } => report_cmd(&input, format, check),
        Command::Serve { service } => serve_cmd(service).await.map(|_| ExitCode::SUCCESS),
        Command::DeriveKey {
            instance_id,
            license_key,
            iterations,
        } => {
            let creds = InstanceCredentials::new(instance_id, license_key)?;
            println!("{}", derive_key(&creds, iterations)?.to_hex());
            Ok(ExitCode::SUCCESS)
        }
        Command::GenCert { hosts, out_dir } => {
            let hosts: Vec<&str> = hosts.iter().map(String::as_str).collect();
            let (cert, key) = self_signed_pem(&hosts)?;
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join("cert.pem"), cert)?;
            std::fs::write(out_dir.join("key.pem"), key)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
