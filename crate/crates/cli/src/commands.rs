use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use seedtrack_capture::{replay, CaptureServer, DEFAULT_PORT};
use seedtrack_core::eval::{concordance_report, mean_dice, read_timings, rle, RaterSet, SpeedReport};
use seedtrack_core::pipeline::{label_session, load_report, reseed};
use seedtrack_core::segment::BackendParams;
use seedtrack_core::store::load_mask_dir;
use seedtrack_core::synth::{generate, write_truth, SceneSpec};
use seedtrack_core::{BackendRegistry, LabelRun, LabelRunConfig, SeedOrigin, SeedPrompt, Session, SessionStore};

use crate::error::{CliError, CliResult};
use crate::{
    frames, port_from_env, BackendArgs, CaptureCmd, Command, EvalCmd, ExportArgs, ExportFormat,
    LabelArgs, ReseedArgs, ReviewCmd, SynthArgs,
};

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Capture(CaptureCmd::Serve { bind, store }) => capture_serve(bind, store),
        Command::Capture(CaptureCmd::Replay {
            session,
            target,
            fps,
            id,
        }) => capture_replay(&session, target, fps, id),
        Command::Synth(a) => synth(a),
        Command::Label(a) => label(a),
        Command::Reseed(a) => reseed_run(a),
        Command::Eval(EvalCmd::Dice {
            run,
            reference,
            frames,
        }) => eval_dice(&run, &reference, &frames),
        Command::Eval(EvalCmd::Concordance {
            reference,
            raters,
            run,
            frames,
        }) => eval_concordance(&reference, &raters, &run, &frames),
        Command::Eval(EvalCmd::Speed { timings, run }) => eval_speed(&timings, &run),
        Command::Review(ReviewCmd::Serve { store, bind }) => review_serve(store, bind),
        Command::Export(a) => export(a),
    }
}

fn dir_name(path: &Path) -> CliResult<String> {
    path.file_name()
        .and_then(|n| n.to_str())
        .map(str::to_string)
        .ok_or_else(|| CliError::invalid(format!("`{}` has no directory name", path.display())))
}

fn announce(what: &str, addr: impl std::fmt::Display) -> CliResult {
    let mut out = std::io::stdout();
    writeln!(out, "{what} listening on {addr}")?;
    out.flush()?;
    Ok(())
}

fn capture_serve(bind: Option<String>, store: PathBuf) -> CliResult {
    let bind = match bind {
        Some(b) => b,
        None => format!("0.0.0.0:{}", port_from_env("SEEDTRACK_PORT", DEFAULT_PORT)?),
    };
    let server = CaptureServer::bind(&bind, store)
        .map_err(|e| CliError::new("NetworkError", format!("cannot bind {bind}: {e}")))?;
    announce("capture", server.local_addr()?)?;
    server.run();
    Ok(())
}

fn capture_replay(session: &Path, target: Option<String>, fps: f64, id: Option<String>) -> CliResult {
    let session = Session::load(session)?;
    let target = match target {
        Some(t) => t,
        None => format!("127.0.0.1:{}", port_from_env("SEEDTRACK_PORT", DEFAULT_PORT)?),
    };
    let report = replay(&session, target.as_str(), fps, id.as_deref())?;
    match report.error {
        None if report.acked => {
            println!(
                "sent {} frames of `{}` to {target}",
                report.frames_sent, report.session_id
            );
            Ok(())
        }
        err => Err(CliError::new(
            "ProtocolError",
            err.unwrap_or_else(|| "server did not acknowledge STOP".into()),
        )),
    }
}

fn synth(a: SynthArgs) -> CliResult {
    let spec = match (&a.spec, &a.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::new("SpecError", format!("{}: {e}", path.display())))?;
            SceneSpec::from_toml(&text)?
        }
        (None, Some(name)) => SceneSpec::preset(name)?,
        (None, None) => unreachable!("clap requires --spec or --preset"),
    };
    let id = dir_name(&a.out)?;
    let root = a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(root)?;
    let (session, truth) = generate(&spec, a.seed, &SessionStore::new(root), &id)?;
    write_truth(&session, &truth)?;
    let seed = session.seeds()[0];
    println!("{}", session.dir().display());
    println!(
        "{} frames {}, seed ({}, {}) on frame {}, {} ground-truth object(s)",
        session.frame_count(),
        session.resolution(),
        seed.x,
        seed.y,
        seed.frame_index,
        truth.len()
    );
    Ok(())
}

fn parse_params(pairs: &[String]) -> CliResult<BackendParams> {
    pairs
        .iter()
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::new("InvalidConfig", format!("expected KEY=VALUE, got `{p}`")))
        })
        .collect()
}

/// Points the adapter backends at `command`.
fn apply_adapter(config: &mut LabelRunConfig, command: Option<&str>) -> CliResult {
    let mut used = false;
    for spec in [&mut config.segmenter, &mut config.tracker] {
        if spec.name == "adapter" {
            if let Some(c) = command {
                spec.params.insert("command".into(), c.to_string());
            }
            used = true;
        }
    }
    if command.is_some() && !used {
        return Err(CliError::new(
            "InvalidConfig",
            "--adapter given but neither backend is `adapter`",
        ));
    }
    Ok(())
}

fn config_from(b: &BackendArgs, start: Option<usize>, stop: Option<usize>) -> CliResult<LabelRunConfig> {
    let mut config = LabelRunConfig {
        start_frame: start,
        stop_frame: stop,
        ..Default::default()
    };
    config.segmenter.name = b.segmenter.clone();
    config.segmenter.params = parse_params(&b.segmenter_params)?;
    config.tracker.name = b.tracker.clone();
    config.tracker.params = parse_params(&b.tracker_params)?;
    apply_adapter(&mut config, b.adapter.as_deref())?;
    Ok(config)
}

fn finish_run(session: &Session, run: &LabelRun, run_id: Option<String>) -> CliResult {
    let run_id = run_id.unwrap_or_else(|| session.next_run_id());
    run.save(session, &run_id)?;
    let r = &run.report;
    println!("{run_id}");
    println!(
        "{} frames: {} tracked, {} reseeded, {} empty; {:.3} s ({:.2} fps)",
        r.frames,
        r.tracked,
        r.reseeded,
        r.empty,
        r.duration_s,
        r.fps()
    );
    Ok(())
}

fn label(a: LabelArgs) -> CliResult {
    let session = Session::load(&a.session)?;
    let config = config_from(&a.backends, a.start_frame, a.stop_frame)?;
    let mut backends = BackendRegistry::with_defaults().build(&config.segmenter, &config.tracker)?;
    let run = label_session(&session, &config, &mut backends)?;
    finish_run(&session, &run, a.run_id)
}

fn parse_point(p: &str) -> CliResult<(u32, u32)> {
    let bad = || CliError::invalid(format!("expected X,Y, got `{p}`"));
    let (x, y) = p.split_once(',').ok_or_else(bad)?;
    Ok((x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?))
}

fn reseed_run(a: ReseedArgs) -> CliResult {
    let session = Session::load(&a.session)?;
    let base = session.load_annotations(&a.run)?;
    let seeds = a
        .points
        .iter()
        .map(|p| parse_point(p).map(|(x, y)| SeedPrompt::new(a.frame, x, y, SeedOrigin::ReviewClick)))
        .collect::<CliResult<Vec<_>>>()?;
    let mut config = LabelRunConfig::from_backend_info(&base.backend_info);
    apply_adapter(&mut config, a.adapter.as_deref())?;
    let mut backends = BackendRegistry::with_defaults().build(&config.segmenter, &config.tracker)?;
    let run = reseed(&session, &base, &seeds, &config, &mut backends)?;
    finish_run(&session, &run, a.run_id)
}

fn eval_dice(run: &Path, reference: &Path, frames: &str) -> CliResult {
    let machine = load_mask_dir(run)?;
    let reference = load_mask_dir(reference)?;
    let available: Vec<usize> = reference.keys().copied().collect();
    let frames = frames::resolve(frames, &available)?;
    let report = mean_dice(&dir_name(run)?, &machine, &reference, &frames)?;
    print!("{}", report.to_text());
    Ok(())
}

fn eval_concordance(reference: &Path, raters: &[PathBuf], run: &Path, frames: &str) -> CliResult {
    let ref_name = dir_name(reference)?;
    let mut set = BTreeMap::new();
    set.insert(ref_name.clone(), load_mask_dir(reference)?);
    for dir in raters {
        if dir == reference {
            continue;
        }
        let base = dir_name(dir)?;
        let mut name = base.clone();
        let mut n = 2;
        while set.contains_key(&name) {
            name = format!("{base}#{n}");
            n += 1;
        }
        set.insert(name, load_mask_dir(dir)?);
    }
    let raters = RaterSet::new(&ref_name, set)?;
    let available: Vec<usize> = raters.reference_masks().keys().copied().collect();
    let frames = frames::resolve(frames, &available)?;
    let machine = load_mask_dir(run)?;
    let row = concordance_report(&raters, &machine, &dir_name(run)?, &frames)?;
    print!("{}", row.to_text());
    Ok(())
}

/// A run directory lives at `<session>/ann/<run-id>`.
fn session_of_run(run: &Path) -> CliResult<(Session, String)> {
    let id = dir_name(run)?;
    let session_dir = run
        .parent()
        .and_then(Path::parent)
        .ok_or_else(|| CliError::invalid(format!("`{}` is not inside a session", run.display())))?;
    Ok((Session::load(session_dir)?, id))
}

fn eval_speed(timings: &Path, run: &Path) -> CliResult {
    let file = File::open(timings).map_err(|e| CliError::invalid(format!("{}: {e}", timings.display())))?;
    let human = read_timings(file)?;
    let (session, id) = session_of_run(run)?;
    let machine = load_report(&session, &id)?;
    print!("{}", SpeedReport::new(&human, &machine)?.to_text());
    Ok(())
}

fn review_serve(store: PathBuf, bind: Option<String>) -> CliResult {
    let bind = match bind {
        Some(b) => b,
        None => format!(
            "127.0.0.1:{}",
            port_from_env("SEEDTRACK_REVIEW_PORT", seedtrack_review::DEFAULT_PORT)?
        ),
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .map_err(|e| CliError::new("NetworkError", format!("cannot bind {bind}: {e}")))?;
        announce("review", format!("http://{}", listener.local_addr()?))?;
        let app = seedtrack_review::router(SessionStore::new(store), BackendRegistry::with_defaults());
        seedtrack_review::serve(listener, app)
            .await
            .map_err(|e| CliError::new("NetworkError", e.to_string()))
    })
}

/// Frame rate implied by the session timestamps, to the nearest 0.001.
fn session_fps(session: &Session) -> f64 {
    let ts = &session.manifest().timestamps_us;
    match (ts.first(), ts.last()) {
        (Some(&a), Some(&b)) if ts.len() > 1 && b > a => {
            let fps = (ts.len() - 1) as f64 * 1e6 / (b - a) as f64;
            (fps * 1000.0).round() / 1000.0
        }
        _ => 30.0,
    }
}

fn export(a: ExportArgs) -> CliResult {
    let session = Session::load(&a.session)?;
    let run = a.run.as_deref().map(|r| session.load_annotations(r)).transpose()?;
    match a.format {
        ExportFormat::Video => {
            let fps = a.fps.unwrap_or_else(|| session_fps(&session));
            session.export_video(&a.out, fps, run.as_ref())?;
            println!("{} frames at {fps} fps to {}", session.frame_count(), a.out.display());
        }
        ExportFormat::Rle => {
            let run = run.ok_or_else(|| CliError::invalid("`export rle` needs --run"))?;
            let file = File::create(&a.out)
                .map_err(|e| CliError::new("ExportError", format!("{}: {e}", a.out.display())))?;
            let mut out = BufWriter::new(file);
            rle::write(&run, &mut out)?;
            out.flush()
                .map_err(|e| CliError::new("ExportError", format!("{}: {e}", a.out.display())))?;
            println!("{} masks to {}", run.frame_count(), a.out.display());
        }
    }
    Ok(())
}
