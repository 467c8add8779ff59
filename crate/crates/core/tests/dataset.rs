use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use forge_core::audio::wav::write_wav;
use forge_core::audio::Waveform;
use forge_core::dataset::shard::{read_from_shard, ShardIndexEntry};
use forge_core::dataset::{check_manifest, compute_stats, pack, sample_for_review, DatasetError, Manifest};
use forge_core::episode::{
    ActionFrame, AgeGroup, EventInsertion, Gender, InsertMode, MixPlan, Provenance, SpeakerProfile,
};
use forge_core::{parse_markup, Episode, InstructionType};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn voice(id: &str) -> SpeakerProfile {
    SpeakerProfile { id: id.into(), age_group: AgeGroup::Adult, gender: Gender::Female, timbre_ref: format!("{id}.wav") }
}

fn episode(id: &str, itype: InstructionType, instruction: &str, steps: usize) -> Episode {
    Episode {
        id: id.into(),
        instruction_type: itype,
        original_instruction: instruction.into(),
        conversation: parse_markup("[S1] Hmm, what now? [S2] Not sure. [Robot] Should I help? [S1] Yes. [Robot] OK, I will do that. [ACT]").unwrap(),
        audio_ref: format!("audio/{id}.wav"),
        frame_refs: vec!["frames/shared.png".into()],
        actions: (0..steps).map(|i| ActionFrame::new([0.01 * (i % 10) as f64, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0])).collect(),
        speakers: vec![voice("v1"), voice("v2")],
        provenance: Provenance { source: "libero_10".into(), trajectory_id: format!("traj-{id}") },
        mix_plan: None,
    }
}

/// Writes the audio and frame files an episode refers to.
fn materialize(root: &Path, e: &Episode, seconds: f64) {
    std::fs::create_dir_all(root.join("audio")).unwrap();
    std::fs::create_dir_all(root.join("frames")).unwrap();
    std::fs::write(root.join("frames/shared.png"), b"png").unwrap();
    let n = (seconds * 16_000.0) as usize;
    let w = Waveform::new((0..n).map(|i| (i as f64 * 0.05).sin() * 0.3).collect(), 16_000).unwrap();
    write_wav(&root.join(&e.audio_ref), &w, 1).unwrap();
}

#[test]
fn write_read_round_trip_and_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.jsonl");
    let mut m = Manifest::create(&path).unwrap();
    let a = episode("a", InstructionType::Dyadic, "move the pot onto the towel", 20);
    m.write_episode(&a).unwrap();
    assert_eq!(m.read_episode("a").unwrap(), a);
    assert_eq!(m.write_episode(&a).unwrap_err().code(), "DUPLICATE_ID");
    assert_eq!(m.read_episode("zzz").unwrap_err().code(), "NOT_FOUND");

    let mut bad = episode("b", InstructionType::Dyadic, "x", 0);
    bad.actions.clear();
    assert_eq!(m.write_episode(&bad).unwrap_err().code(), "INVALID_EPISODE");

    let reopened = Manifest::open(&path).unwrap();
    assert_eq!(reopened.len(), 1);
    assert_eq!(reopened.read_episode("a").unwrap(), a);
}

#[test]
fn truncated_line_reports_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.jsonl");
    let mut m = Manifest::create(&path).unwrap();
    for i in 0..20 {
        m.write_episode(&episode(&format!("e{i:02}"), InstructionType::Sentiment, "open the drawer", 5)).unwrap();
    }
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let cut = lines[16].len() / 2;
    lines[16].truncate(cut);
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    match Manifest::open(&path).unwrap_err() {
        DatasetError::CorruptLine { line, .. } => assert_eq!(line, 17),
        other => panic!("unexpected {other}"),
    }
    let report = check_manifest(&path);
    assert_eq!(report.exit_code(), 2);
}

#[test]
fn duplicated_id_in_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.jsonl");
    let line = serde_json::to_string(&episode("a", InstructionType::Identity, "open the drawer", 5)).unwrap();
    std::fs::write(&path, format!("{line}\n{line}\n")).unwrap();
    assert_eq!(Manifest::open(&path).unwrap_err().code(), "DUPLICATE_ID");
    assert_eq!(check_manifest(&path).exit_code(), 2);
}

#[test]
fn one_per_contextual_type_gives_all_ones() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = Manifest::create(dir.path().join("manifest.jsonl")).unwrap();
    for (i, t) in InstructionType::CONTEXTUAL.into_iter().enumerate() {
        m.write_episode(&episode(&format!("e{i}"), t, "pick up the apple", 10)).unwrap();
    }
    let s = compute_stats(&m).unwrap();
    for t in InstructionType::CONTEXTUAL {
        assert_eq!(s.per_type[&t], 1);
    }
    assert_eq!(s.per_type[&InstructionType::DirectText], 0);
    assert_eq!(s.per_type.values().sum::<usize>(), s.totals.episodes);
    assert_eq!(s.audio_missing, 6);
}

const SKILLS: [&str; 12] = [
    "pick up", "place", "move", "push", "pull", "open", "close", "pour", "wipe", "stack", "fold", "flip",
];
const SKILL_NAMES: [&str; 12] = [
    "pick", "place", "move", "push", "pull", "open", "close", "pour", "wipe", "stack", "fold", "flip",
];
const OBJECTS: [&str; 25] = [
    "apple", "banana", "orange", "lemon", "lime", "peach", "pear", "grape", "strawberry", "carrot", "corn",
    "eggplant", "potato", "tomato", "pepper", "cucumber", "mushroom", "sausage", "egg", "bread", "sandwich",
    "cookie", "cheese", "butter", "milk",
];

#[test]
fn stats_match_generator_tallies() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut m = Manifest::create(root.join("manifest.jsonl")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut types = Vec::new();
    types.extend([InstructionType::Dyadic; 40]);
    types.extend([InstructionType::Sentiment; 30]);
    types.extend([InstructionType::NonVerbal; 30]);
    let mut tally_types: BTreeMap<InstructionType, usize> = BTreeMap::new();
    let mut tally_skills = BTreeSet::new();
    let mut tally_objects = BTreeSet::new();
    let mut tally_events = BTreeSet::new();
    let mut tally_durations: BTreeMap<String, usize> = BTreeMap::new();
    for (i, t) in types.into_iter().enumerate() {
        // Cover every skill and object at least once, then draw at random.
        let s = if i < 12 { i } else { rng.gen_range(0..12) };
        let o = if i < 25 { i } else { rng.gen_range(0..25) };
        let mut e = episode(&format!("ep{i:03}"), t, &format!("{} the {}", SKILLS[s], OBJECTS[o]), 5 + i);
        if t == InstructionType::NonVerbal {
            let clip = format!("clip{}", i % 4);
            tally_events.insert(clip.clone());
            e.mix_plan = Some(MixPlan {
                background_id: Some("hum".into()),
                target_snr_db: 10.0,
                event_insertions: vec![EventInsertion { anchor_index: 0, clip_id: clip, mode: InsertMode::GapInsert }],
            });
            e.conversation = parse_markup("[S1] Hmm [Sound] ok. [Robot] Should I? [S1] Yes. [Robot] OK. [ACT]").unwrap();
        }
        let seconds = 1.0 + (i % 3) as f64 * 5.0;
        materialize(root, &e, seconds);
        *tally_durations.entry(format!("{:03}-{:03}", (i % 3) * 5, (i % 3) * 5 + 5)).or_default() += 1;
        *tally_types.entry(t).or_default() += 1;
        tally_skills.insert(SKILL_NAMES[s]);
        tally_objects.insert(OBJECTS[o]);
        m.write_episode(&e).unwrap();
    }
    let s = compute_stats(&m).unwrap();
    assert_eq!(s.totals.episodes, 100);
    assert_eq!(s.totals.trajectories, 100);
    assert_eq!(s.totals.skills, tally_skills.len());
    assert_eq!(s.totals.skills, 12);
    assert_eq!(s.totals.objects, tally_objects.len());
    assert_eq!(s.totals.objects, 25);
    assert_eq!(s.totals.speakers, 2);
    assert_eq!(s.totals.sound_events, tally_events.len());
    assert_eq!(s.totals.backgrounds, 1);
    for (t, n) in &tally_types {
        assert_eq!(s.per_type[t], *n);
    }
    assert_eq!(s.audio_duration, tally_durations);
    assert_eq!(s.audio_missing, 0);
    assert_eq!(s.action_length.values().sum::<usize>(), 100);
    assert_eq!(check_manifest(m.path()).exit_code(), 0);
}

fn population(per_type: usize) -> Vec<Episode> {
    let mut out = Vec::new();
    for t in InstructionType::ALL {
        for i in 0..per_type {
            out.push(episode(&format!("{t}-{i}"), t, "open the drawer", 3));
        }
    }
    out
}

#[test]
fn sampling_examples() {
    let pop = population(3);
    let all = sample_for_review(&pop, pop.len(), 5, false, ".").unwrap();
    let ids: BTreeSet<_> = all.items.iter().map(|i| i.episode_id.clone()).collect();
    assert_eq!(ids.len(), pop.len());
    let sorted: Vec<_> = ids.iter().cloned().collect();
    let drawn: Vec<_> = all.items.iter().map(|i| i.episode_id.clone()).collect();
    assert_ne!(drawn, sorted, "population should come back shuffled");

    assert_eq!(sample_for_review(&pop, 9, 1, true, ".").unwrap(), sample_for_review(&pop, 9, 1, true, ".").unwrap());
    assert_ne!(sample_for_review(&pop, 9, 1, false, ".").unwrap(), sample_for_review(&pop, 9, 2, false, ".").unwrap());

    let batch = sample_for_review(&population(2), 14, 3, true, ".").unwrap();
    let mut counts: BTreeMap<InstructionType, usize> = BTreeMap::new();
    for item in &batch.items {
        *counts.entry(item.instruction_type).or_default() += 1;
    }
    assert_eq!(counts.len(), 7);
    assert!(counts.values().all(|&c| c == 2));

    assert_eq!(sample_for_review(&pop, 22, 0, false, ".").unwrap_err().code(), "SAMPLE_TOO_LARGE");
    assert_eq!(sample_for_review(&pop, 0, 0, false, ".").unwrap_err().code(), "EMPTY_SAMPLE");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stratified_counts_stay_within_one(per_type in 3usize..12, frac in 0.05f64..1.0, seed in any::<u64>()) {
        let pop = population(per_type);
        let n = ((pop.len() as f64 * frac) as usize).max(1);
        let batch = sample_for_review(&pop, n, seed, true, ".").unwrap();
        prop_assert_eq!(batch.items.len(), n);
        let mut counts: BTreeMap<InstructionType, usize> = BTreeMap::new();
        for item in &batch.items {
            *counts.entry(item.instruction_type).or_default() += 1;
        }
        let target = (n as f64 / 7.0).round() as i64;
        for t in InstructionType::ALL {
            let c = *counts.get(&t).unwrap_or(&0) as i64;
            prop_assert!((c - target).abs() <= 1, "{t}: {c} vs {target}");
        }
        let unique: BTreeSet<_> = batch.items.iter().map(|i| &i.episode_id).collect();
        prop_assert_eq!(unique.len(), n);
    }
}

#[test]
fn pack_is_idempotent_and_shards_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut m = Manifest::create(root.join("manifest.jsonl")).unwrap();
    for i in (0..30).rev() {
        let e = episode(&format!("p{i:02}"), InstructionType::ALL[i % 7], "close the drawer", 4);
        materialize(root, &e, 0.2);
        m.write_episode(&e).unwrap();
    }
    let out = root.join("shards");
    let first = pack(&mut m, &out).unwrap();
    assert_eq!(m.ids().first().map(String::as_str), Some("p00"));
    let snapshot = |dir: &Path| {
        let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files.into_iter().map(|p| (p.clone(), std::fs::read(p).unwrap())).collect::<Vec<_>>()
    };
    let manifest_bytes = std::fs::read(m.path()).unwrap();
    let shard_bytes = snapshot(&out);
    let second = pack(&mut m, &out).unwrap();
    assert_eq!(first, second);
    assert_eq!(std::fs::read(m.path()).unwrap(), manifest_bytes);
    assert_eq!(snapshot(&out), shard_bytes);

    let info = &first.shards[0];
    assert_eq!(info.episodes, 30);
    let index = std::fs::read_to_string(out.join(&info.index)).unwrap();
    let entries: Vec<ShardIndexEntry> = index.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let (ep, audio) = read_from_shard(&out.join(&info.file), &entries[7]).unwrap();
    assert_eq!(ep, m.read_episode(&entries[7].id).unwrap());
    assert_eq!(audio, std::fs::read(root.join(&ep.audio_ref)).unwrap());

    // Tar readers see the same members.
    let mut archive = tar::Archive::new(std::fs::File::open(out.join(&info.file)).unwrap());
    assert_eq!(archive.entries().unwrap().count(), 60);
}

#[test]
fn check_flags_missing_and_non_canonical_audio() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut m = Manifest::create(root.join("manifest.jsonl")).unwrap();
    let good = episode("good", InstructionType::Dyadic, "open the drawer", 4);
    materialize(root, &good, 0.1);
    m.write_episode(&good).unwrap();
    m.write_episode(&episode("missing", InstructionType::Dyadic, "open the drawer", 4)).unwrap();
    let stereo = episode("stereo", InstructionType::Dyadic, "open the drawer", 4);
    let spec = hound::WavSpec { channels: 2, sample_rate: 16_000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(root.join(&stereo.audio_ref), spec).unwrap();
    w.write_sample(0i16).unwrap();
    w.write_sample(0i16).unwrap();
    w.finalize().unwrap();
    m.write_episode(&stereo).unwrap();
    let report = check_manifest(m.path());
    assert_eq!(report.exit_code(), 1);
    let codes: Vec<_> = report.issues.iter().map(|i| (i.id.as_str(), i.code.as_str())).collect();
    assert_eq!(codes, [("missing", "AUDIO_MISSING"), ("stereo", "AUDIO_FORMAT")]);
}
