use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use exddi_core::dataset::{DdiRecord, Label, Source};
use exddi_core::eval::PredLabel;
use exddi_core::prompting::*;
use exddi_core::retrieval::{Query, TrainingIndex};

const DRUGS: [(&str, &str); 8] = [
    ("D01", "CCO"),
    ("D02", "CCCO"),
    ("D03", "c1ccccc1O"),
    ("D04", "c1ccccc1N"),
    ("D05", "CC(=O)O"),
    ("D06", "CC(=O)N"),
    ("D07", "C1CCCCC1"),
    ("D08", "ClCCCl"),
];

fn record(i: usize, a: usize, b: usize, positive: bool) -> DdiRecord {
    DdiRecord {
        record_id: format!("r{i}"),
        drug1_id: DRUGS[a].0.into(),
        drug2_id: DRUGS[b].0.into(),
        smiles1: DRUGS[a].1.into(),
        smiles2: DRUGS[b].1.into(),
        drug1_names: vec![],
        drug2_names: vec![],
        drug1_def: format!("{} def", DRUGS[a].0),
        drug2_def: format!("{} def", DRUGS[b].0),
        label: Label::from_bool(positive),
        explanation: if positive {
            format!("DRUG1 may increase the effect of DRUG2 (mechanism {i}).")
        } else {
            "DRUG1 def. DRUG2 def. There were no known direct interactions reported between them.".into()
        },
        source: Source::Synthetic,
        category: None,
    }
}

fn index() -> TrainingIndex {
    let pairs = [(0, 1), (0, 2), (1, 3), (2, 3), (4, 5), (5, 6), (6, 7), (1, 7), (3, 4)];
    let recs: Vec<DdiRecord> = pairs.iter().enumerate().map(|(i, &(a, b))| record(i, a, b, i % 3 != 2)).collect();
    TrainingIndex::build(&recs, 8).unwrap()
}

#[test]
fn golden_prompt() {
    let idx = index();
    let q = Query::new("OCCO", "c1ccccc1Cl");
    let demos = select_demonstrations(&idx, &q, 5).unwrap();
    assert_eq!(demos.len(), 5);
    assert!(demos.windows(2).all(|w| w[0].score >= w[1].score));
    let prompt = build_prompt(&q.smiles1, &q.smiles2, &demos);
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/golden_prompt.txt");
    if std::env::var_os("EXDDI_BLESS").is_some() {
        std::fs::write(path, &prompt).unwrap();
    }
    let golden = std::fs::read_to_string(path).unwrap();
    assert_eq!(prompt, golden);
    assert_eq!(build_prompt(&q.smiles1, &q.smiles2, &demos), prompt);
}

#[test]
fn top_demonstration_is_the_prediction() {
    let idx = index();
    for (s1, s2) in [("OCCO", "c1ccccc1Cl"), ("CCN", "CC(=O)OC"), ("C1CCCC1", "ClCCl"), ("CCO", "CCCO")] {
        let q = Query::new(s1, s2);
        let demo = select_demonstrations(&idx, &q, 1).unwrap();
        let pred = idx.predict(&q, idx.k_default()).unwrap();
        assert_eq!(demo.len(), 1);
        assert_eq!(Some(&demo[0].pair), pred.provenance.pair.as_ref());
        assert_eq!(demo[0].explanation, pred.explanation);
        assert_eq!(demo[0].label, pred.label);
    }
}

#[test]
fn own_pair_is_not_a_demonstration() {
    let idx = index();
    let mut q = Query::new("CCO", "CCCO");
    q.drug_ids = Some(("D02".into(), "D01".into()));
    let demos = select_demonstrations(&idx, &q, 9).unwrap();
    assert!(demos.iter().all(|d| d.pair.0 != "D01" || d.pair.1 != "D02"));
}

/// Minimal HTTP server: answers each connection with the next canned
/// (status, body) and counts requests.
fn serve(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for (stream, (status, body)) in listener.incoming().zip(responses) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut auth = false;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                auth |= lower.starts_with("authorization: bearer test-key");
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let req: serde_json::Value = serde_json::from_slice(&buf).unwrap();
            assert_eq!(req["messages"][0]["content"], "hello");
            assert!(auth);
            counter.fetch_add(1, Ordering::SeqCst);
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, hits)
}

#[test]
fn http_backend_retries_then_succeeds() {
    std::env::set_var("EXDDI_TEST_KEY", "test-key");
    let ok = r#"{"choices":[{"message":{"role":"assistant","content":"Yes. Both raise levels."}}]}"#;
    let (url, hits) = serve(vec![(503, "{}".into()), (429, "{}".into()), (200, ok.into())]);
    let backend = HttpBackend::new(HttpConfig {
        endpoint: url,
        api_key_env: "EXDDI_TEST_KEY".into(),
        timeout_secs: 5,
        backoff_ms: 1,
        ..HttpConfig::default()
    })
    .unwrap();
    let text = backend.send("hello").unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    assert_eq!(parse_completion(&text).label, PredLabel::Positive);

    let (url, hits) = serve(vec![(400, "{}".into()), (200, ok.into())]);
    let backend = HttpBackend::new(HttpConfig {
        endpoint: url,
        api_key_env: "EXDDI_TEST_KEY".into(),
        timeout_secs: 5,
        backoff_ms: 1,
        ..HttpConfig::default()
    })
    .unwrap();
    assert!(matches!(backend.send("hello"), Err(BackendError::Http { attempts: 1, .. })));
    assert_eq!(hits.load(Ordering::SeqCst), 1);

    assert!(matches!(
        HttpBackend::new(HttpConfig { api_key_env: "EXDDI_UNSET_KEY_VAR".into(), ..HttpConfig::default() }),
        Err(BackendError::MissingApiKey { .. })
    ));
}

#[test]
fn replay_backend_drives_parsing() {
    let idx = index();
    let q = Query::new("OCCO", "c1ccccc1Cl");
    let prompt = build_prompt(&q.smiles1, &q.smiles2, &select_demonstrations(&idx, &q, 5).unwrap());
    let backend = ReplayBackend::from_pairs([(prompt.clone(), "No, nothing known.".to_string())]);
    let out = complete_all(&backend, &[prompt.clone(), prompt], 2);
    for r in out {
        let e = parse_completion(&r.unwrap());
        assert_eq!((e.label, e.explanation.as_str()), (PredLabel::Negative, "nothing known."));
    }
}
