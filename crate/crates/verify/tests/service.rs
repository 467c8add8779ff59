use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use forge_core::dataset::{BatchItem, ReviewBatch};
use forge_core::InstructionType;
use forge_verify::{read_log, Fault, ReviewItem, ServiceState, Verdict, VerdictLog};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reqwest::StatusCode;
use serde_json::{json, Value};

fn batch(n: usize, calibration: usize, root: &Path) -> ReviewBatch {
    ReviewBatch {
        root: root.display().to_string(),
        seed: 0,
        stratified: false,
        items: (0..n)
            .map(|i| BatchItem {
                episode_id: format!("ep{i:04}"),
                instruction_type: InstructionType::ALL[i % 7],
                original_instruction: "open the drawer".into(),
                transcript: "[S1] Hmm. [Robot] Should I open it? [S1] Yes. [Robot] OK. [ACT]".into(),
                audio_ref: format!("audio/ep{i:04}.wav"),
                calibration: i < calibration,
            })
            .collect(),
    }
}

struct Server {
    base: String,
    state: Arc<ServiceState>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Server {
    async fn start(batch: Option<ReviewBatch>, log: &Path, static_dir: Option<&Path>) -> Server {
        let state = Arc::new(ServiceState::new(batch, VerdictLog::open(log).unwrap()));
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let task = tokio::spawn(forge_verify::serve(listener, state.clone(), static_dir.map(Path::to_path_buf)));
        Server { base, state, task }
    }

    fn stop(self) {
        self.task.abort();
    }
}

fn verdict(ep: &str, who: &str, yes: bool) -> Value {
    json!({"episode_id": ep, "annotator_id": who, "intent_recoverable": yes, "phenomenon_fidelity": true, "notes": ""})
}

async fn next(c: &reqwest::Client, base: &str, who: &str) -> Option<ReviewItem> {
    let r = c.get(format!("{base}/api/review/next?annotator={who}")).send().await.unwrap();
    match r.status() {
        StatusCode::NO_CONTENT => None,
        StatusCode::OK => Some(r.json().await.unwrap()),
        other => panic!("unexpected {other}"),
    }
}

async fn post(c: &reqwest::Client, base: &str, body: &Value) -> StatusCode {
    c.post(format!("{base}/api/verdicts")).json(body).send().await.unwrap().status()
}

#[tokio::test]
async fn queue_walkthrough() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(Some(batch(3, 0, dir.path())), &dir.path().join("v.jsonl"), None).await;
    let c = reqwest::Client::new();
    let first = next(&c, &s.base, "ann").await.unwrap();
    assert_eq!(first.index, 0);
    assert_eq!(first.audio_url, "/api/episodes/ep0000/audio");
    assert_eq!(post(&c, &s.base, &verdict("ep0000", "ann", true)).await, StatusCode::CREATED);
    assert_eq!(next(&c, &s.base, "ann").await.unwrap().index, 1);
    assert_eq!(post(&c, &s.base, &verdict("ep0000", "ann", false)).await, StatusCode::CONFLICT);
    assert_eq!(post(&c, &s.base, &verdict("nope", "ann", true)).await, StatusCode::NOT_FOUND);
    for ep in ["ep0001", "ep0002"] {
        assert_eq!(post(&c, &s.base, &verdict(ep, "ann", true)).await, StatusCode::CREATED);
    }
    assert!(next(&c, &s.base, "ann").await.is_none());
    // Header form of the annotator id.
    let r = c.get(format!("{}/api/review/next", s.base)).header("x-annotator", "other").send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let r = c.get(format!("{}/api/review/next", s.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    let info: Value = c.get(format!("{}/api/batch", s.base)).send().await.unwrap().json().await.unwrap();
    assert_eq!(info["items"], 3);
    assert_eq!(info["verdicts"], 3);
    s.stop();
}

#[tokio::test]
async fn no_batch_and_no_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(None, &dir.path().join("v.jsonl"), None).await;
    let c = reqwest::Client::new();
    let r = c.get(format!("{}/api/review/next?annotator=a", s.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::SERVICE_UNAVAILABLE);
    let e: Value = r.json().await.unwrap();
    assert_eq!(e["code"], "NO_BATCH_LOADED");
    let r = c.get(format!("{}/api/report", s.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    s.stop();
}

/// Replays a scripted request log for two interleaved annotators against a
/// model of the queue: each annotator's next item is the lowest index it has
/// not judged.
#[tokio::test]
async fn interleaved_annotators_follow_replay_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let b = batch(12, 0, dir.path());
    let s = Server::start(Some(b.clone()), &dir.path().join("v.jsonl"), None).await;
    let c = reqwest::Client::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut judged: BTreeMap<&str, HashSet<usize>> = BTreeMap::new();
    let mut request_log = Vec::new();
    for _ in 0..60 {
        let who = if rng.gen_bool(0.5) { "alice" } else { "bob" };
        let mine = judged.entry(who).or_default();
        let expected = (0..b.items.len()).find(|i| !mine.contains(i));
        let got = next(&c, &s.base, who).await.map(|i| i.index);
        request_log.push((who, expected, got));
        assert_eq!(got, expected, "{request_log:?}");
        if let Some(i) = got {
            // Sometimes judge out of order to exercise the frontier.
            let pick = if rng.gen_bool(0.3) {
                (0..b.items.len()).filter(|k| !mine.contains(k)).last().unwrap()
            } else {
                i
            };
            let status = post(&c, &s.base, &verdict(&b.items[pick].episode_id, who, true)).await;
            assert_eq!(status, StatusCode::CREATED);
            mine.insert(pick);
        }
    }
    s.stop();
}

#[tokio::test]
async fn agreement_replication_987_of_1000() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(Some(batch(1000, 0, dir.path())), &dir.path().join("v.jsonl"), None).await;
    let c = reqwest::Client::new();
    for i in 0..1000 {
        let status = post(&c, &s.base, &verdict(&format!("ep{i:04}"), "ann", i >= 13)).await;
        assert_eq!(status, StatusCode::CREATED);
    }
    let r: Value = c.get(format!("{}/api/report", s.base)).send().await.unwrap().json().await.unwrap();
    assert_eq!(r["n_verdicts"], 1000);
    assert_eq!(r["recoverable_rate"].as_f64().unwrap(), 98.7);
    assert_eq!(r["recoverable"]["permille"], 987);
    assert_eq!(r["fidelity_rate"].as_f64().unwrap(), 100.0);

    // Recount from the raw log.
    let raw = read_log(&dir.path().join("v.jsonl")).unwrap();
    let yes = raw.iter().filter(|v| v.intent_recoverable).count();
    assert_eq!((yes, raw.len()), (987, 1000));
    let oracle = (yes as f64 * 1000.0 / raw.len() as f64).round() / 10.0;
    assert_eq!(r["recoverable_rate"].as_f64().unwrap(), oracle);

    let dyadic: Value = c
        .get(format!("{}/api/report?instruction_type=dyadic", s.base))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(dyadic["n_verdicts"], r["per_type"]["dyadic"]["n_verdicts"]);
    s.stop();
}

#[tokio::test]
async fn small_ratios_and_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(Some(batch(5, 2, dir.path())), &dir.path().join("v.jsonl"), None).await;
    let c = reqwest::Client::new();
    // Calibration answers do not count.
    post(&c, &s.base, &verdict("ep0000", "a", false)).await;
    post(&c, &s.base, &verdict("ep0001", "a", false)).await;
    for (ep, yes) in [("ep0002", true), ("ep0003", false), ("ep0004", false)] {
        post(&c, &s.base, &verdict(ep, "a", yes)).await;
    }
    let r: Value = c.get(format!("{}/api/report", s.base)).send().await.unwrap().json().await.unwrap();
    assert_eq!(r["n_verdicts"], 3);
    assert_eq!(r["calibration_excluded"], 2);
    assert_eq!(r["recoverable_rate"].as_f64().unwrap(), 33.3);
    for ep in ["ep0002", "ep0003", "ep0004"] {
        post(&c, &s.base, &verdict(ep, "b", true)).await;
    }
    let r: Value =
        c.get(format!("{}/api/report?annotator=b", s.base)).send().await.unwrap().json().await.unwrap();
    assert_eq!(r["recoverable_rate"].as_f64().unwrap(), 100.0);
    s.stop();
}

#[tokio::test]
async fn audio_and_static_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("audio")).unwrap();
    std::fs::write(dir.path().join("audio/ep0000.wav"), b"RIFFfake").unwrap();
    let web = dir.path().join("web");
    std::fs::create_dir_all(&web).unwrap();
    std::fs::write(web.join("index.html"), "<html>console</html>").unwrap();
    let s = Server::start(Some(batch(2, 0, dir.path())), &dir.path().join("v.jsonl"), Some(&web)).await;
    let c = reqwest::Client::new();
    let r = c.get(format!("{}/api/episodes/ep0000/audio", s.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.headers()["content-type"], "audio/wav");
    assert_eq!(r.bytes().await.unwrap().as_ref(), b"RIFFfake");
    assert_eq!(c.get(format!("{}/api/episodes/ep0001/audio", s.base)).send().await.unwrap().status(), StatusCode::NOT_FOUND);
    assert_eq!(c.get(format!("{}/api/episodes/zz/audio", s.base)).send().await.unwrap().status(), StatusCode::NOT_FOUND);
    let page = c.get(format!("{}/index.html", s.base)).send().await.unwrap().text().await.unwrap();
    assert!(page.contains("console"));
    s.stop();
}

/// Submits verdicts, crashes the service at a random append (torn or after
/// the sync), restarts it from the log and retries every unacknowledged
/// verdict. No acknowledged verdict may vanish and none may count twice.
pub async fn crash_trial(trial: u64, dir: &Path) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial);
    let log = dir.join(format!("trial-{trial}.jsonl"));
    let b = batch(12, 0, dir);
    let c = reqwest::Client::new();
    let mut pairs: Vec<(String, String)> =
        (0..12).flat_map(|i| ["a", "b"].map(|w| (format!("ep{i:04}"), w.to_string()))).collect();
    pairs.shuffle(&mut rng);
    let plan: Vec<(String, String, bool)> =
        pairs.into_iter().take(rng.gen_range(3..16)).map(|(e, w)| (e, w, rng.gen_bool(0.9))).collect();
    let crash_at = rng.gen_range(0..plan.len());
    let fault = if rng.gen_bool(0.5) { Fault::AfterAppend } else { Fault::TornAppend { keep: rng.gen_range(0..40) } };

    let s = Server::start(Some(b.clone()), &log, None).await;
    s.state.inject_fault(crash_at, fault);
    let mut acked = HashSet::new();
    let mut unacked = Vec::new();
    for (ep, who, yes) in &plan {
        let status = post(&c, &s.base, &verdict(ep, who, *yes)).await;
        match status {
            StatusCode::CREATED => {
                acked.insert((ep.clone(), who.clone()));
            }
            StatusCode::CONFLICT => {}
            _ => unacked.push((ep.clone(), who.clone(), *yes)),
        }
    }
    if !s.state.is_crashed() {
        return Err(format!("trial {trial}: fault never fired"));
    }
    s.stop();

    let s = Server::start(Some(b), &log, None).await;
    let recovered: HashSet<(String, String)> =
        s.state.verdicts().into_iter().map(|v: Verdict| (v.episode_id, v.annotator_id)).collect();
    if let Some(lost) = acked.iter().find(|k| !recovered.contains(*k)) {
        return Err(format!("trial {trial}: acked verdict {lost:?} lost"));
    }
    for (ep, who, yes) in &unacked {
        let status = post(&c, &s.base, &verdict(ep, who, *yes)).await;
        if status != StatusCode::CREATED && status != StatusCode::CONFLICT {
            return Err(format!("trial {trial}: retry got {status}"));
        }
    }
    let raw = read_log(&log).map_err(|e| e.to_string())?;
    let keys: Vec<_> = raw.iter().map(|v| (v.episode_id.clone(), v.annotator_id.clone())).collect();
    let unique: HashSet<_> = keys.iter().cloned().collect();
    let submitted: HashSet<_> = plan.iter().map(|(e, w, _)| (e.clone(), w.clone())).collect();
    s.stop();
    if unique.len() != keys.len() {
        return Err(format!("trial {trial}: a verdict was counted twice"));
    }
    if unique != submitted {
        return Err(format!("trial {trial}: log holds {} verdicts, {} distinct submitted", unique.len(), submitted.len()));
    }
    Ok(())
}

#[tokio::test(flavor = "multi_thread")]
async fn crash_durability_over_100_points() {
    let dir = tempfile::tempdir().unwrap();
    for trial in 0..100 {
        crash_trial(trial, dir.path()).await.unwrap();
    }
}
