//! Confidence sources: calibration of the synthetic scorer, its closed-form
//! mean, determinism, and the completion client against a local stub server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use askhelp::scenario::{sample_scenarios, Setting, Truth};
use askhelp::scorer::{
    build_mcqa_prompt, effective_concentration, synthetic_score, LlmClient, LlmSpec, OptionOrder, ScorerSpec,
};
use askhelp::{Error, Label, SyntheticSpec};
use serde_json::{json, Value};

/// For a calibrated scorer, among all (node, label) pairs whose score falls in
/// a bin, the fraction where that label is the truth equals the mean score.
#[test]
fn truthful_scorer_is_reliable_by_decile() {
    let spec = SyntheticSpec::truthful(4.0);
    let mut bins = [(0usize, 0.0f64, 0usize); 10];
    for setting in Setting::SINGLE_STEP {
        for s in sample_scenarios(setting, 50_000 / 3, 61).unwrap() {
            let Truth::Single(truth) = s.truth else { panic!("single-step truth") };
            let v = synthetic_score(&spec, &s, 0, &[], 62).unwrap();
            for l in Label::ALL {
                let p = v.get(l);
                let bin = &mut bins[((p * 10.0) as usize).min(9)];
                bin.0 += 1;
                bin.1 += p;
                bin.2 += usize::from(l == truth);
            }
        }
    }
    for (i, (n, total, hits)) in bins.iter().enumerate() {
        if *n < 1000 {
            continue;
        }
        let (mean, rate) = (total / *n as f64, *hits as f64 / *n as f64);
        assert!((mean - rate).abs() <= 0.03, "decile {i}: mean score {mean:.3}, hit rate {rate:.3} over {n}");
    }
}

/// `Dirichlet(alpha)` has mean `alpha_i / sum(alpha)`; with shapes
/// `prior/kappa + e_truth` and a unit-mass prior, the truth gets
/// `(prior_truth/kappa + 1) / (1/kappa + 1)`.
#[test]
fn mean_truth_mass_matches_the_dirichlet_mean() {
    let spec = SyntheticSpec::truthful(3.0);
    let s = sample_scenarios(Setting::Spatial, 1, 5).unwrap().remove(0);
    let Truth::Single(truth) = s.truth else { panic!("single-step truth") };
    let kappa = effective_concentration(3.0, s.ambiguity);
    let expected = (s.intent_prior[truth.index()] / kappa + 1.0) / (1.0 / kappa + 1.0);
    let draws = 40_000;
    let samples: Vec<f64> =
        (0..draws).map(|seed| synthetic_score(&spec, &s, 0, &[], seed).unwrap().get(truth)).collect();
    let mean = samples.iter().sum::<f64>() / draws as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    let se = (var / draws as f64).sqrt();
    assert!((mean - expected).abs() < 4.0 * se, "mean {mean} vs {expected} (se {se})");
}

#[test]
fn synthetic_scores_are_pure_functions_of_their_inputs() {
    let spec = SyntheticSpec::new(2.5, 0.2, 1.7).unwrap();
    let scorer = ScorerSpec::Synthetic(spec).build().unwrap();
    for s in sample_scenarios(Setting::Sorting, 20, 8).unwrap() {
        let a = synthetic_score(&spec, &s, 0, &[], 99).unwrap();
        let b = askhelp::scorer::ConfidenceSource::confidence(&scorer, &s, 0, &[], 99).unwrap();
        assert_eq!(a.as_array().map(f64::to_bits), b.as_array().map(f64::to_bits));
        assert!((a.total() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn answer_prompt_layout() {
    let generated = ["pick up the apple", "pick up the can", "open the drawer", "wipe the table"].map(String::from);
    let prompt = build_mcqa_prompt("We: On the counter there is an apple.\nWe: Grab the fruit.", generated, OptionOrder::Identity);
    assert_eq!(
        prompt.text,
        "We: On the counter there is an apple.\nWe: Grab the fruit.\nYou:\n\
         A) pick up the apple\nB) pick up the can\nC) open the drawer\nD) wipe the table\n\
         E) an option not listed here\n\
         We: Which option is correct? Answer with a single letter.\nYou:"
    );
}

/// Serves one canned HTTP response per entry and reports each request body.
fn stub_server(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<Value>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0usize;
            let mut line = String::new();
            loop {
                line.clear();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut request = vec![0u8; length];
            reader.read_exact(&mut request).unwrap();
            let _ = tx.send(serde_json::from_slice(&request).unwrap_or(Value::Null));
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn completion(top: Value) -> String {
    json!({"choices": [{"text": " A", "logprobs": {"top_logprobs": [top]}}]}).to_string()
}

fn client(url: &str) -> LlmClient {
    let mut spec = LlmSpec::new(url, "stub-model");
    spec.retries = 1;
    spec.timeout_secs = 5.0;
    LlmClient::new(spec).unwrap()
}

#[test]
fn client_scores_from_top_logprobs_and_unpermutes() {
    let top = json!({" A": 0.5f64.ln(), "B)": 0.3f64.ln(), " B": 0.1f64.ln(), "xyz": 0.1f64.ln()});
    let (url, requests) = stub_server(vec![(200, completion(top))]);
    let generated = ["one", "two", "three", "four"].map(String::from);
    let prompt = build_mcqa_prompt("We: ctx", generated, OptionOrder::Shuffled(4));
    let v = client(&url).score(&prompt).unwrap();

    let request = requests.recv().unwrap();
    assert_eq!(request["prompt"], prompt.text);
    assert_eq!(request["max_tokens"], 1);
    assert_eq!(request["logprobs"], 5);
    assert_eq!(request["model"], "stub-model");

    // Positions A and B hold 0.5 and 0.4 of the 0.9 label mass.
    let a = prompt.canonical_label(Label::A);
    let b = prompt.canonical_label(Label::B);
    assert!((v.get(a) - 0.5 / 0.9).abs() < 1e-12);
    assert!((v.get(b) - 0.4 / 0.9).abs() < 1e-12);
    assert!((v.total() - 1.0).abs() < 1e-12);
}

#[test]
fn client_retries_server_errors_and_rejects_bad_requests() {
    let ok = completion(json!({"C": 0.0}));
    let (url, _r) = stub_server(vec![(503, "{}".into()), (200, ok)]);
    let prompt = build_mcqa_prompt("We: ctx", ["a", "b", "c", "d"].map(String::from), OptionOrder::Identity);
    let v = client(&url).score(&prompt).unwrap();
    assert_eq!(v.get(Label::C), 1.0);

    let (url, _r) = stub_server(vec![(400, "{\"error\":\"bad\"}".into())]);
    assert!(matches!(client(&url).score(&prompt), Err(Error::Protocol(_))));

    let (url, _r) = stub_server(vec![(200, completion(json!({"hello": -0.1})))]);
    assert!(matches!(client(&url).score(&prompt), Err(Error::DegenerateResponse)));

    let (url, _r) = stub_server(vec![(200, "not json".into())]);
    assert!(matches!(client(&url).score(&prompt), Err(Error::Protocol(_))));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    drop(listener);
    let prompt = build_mcqa_prompt("We: ctx", ["a", "b", "c", "d"].map(String::from), OptionOrder::Identity);
    assert!(matches!(client(&url).score(&prompt), Err(Error::Transport(_))));
}

#[test]
fn option_generation_round_trip() {
    let text = "A) put the apple in the bowl\nB) put the can in the bin\nC) open the drawer\nD) do nothing";
    let body = json!({"choices": [{"text": text}]}).to_string();
    let (url, requests) = stub_server(vec![(200, body)]);
    let options = client(&url).generate_options("We: ctx").unwrap();
    assert_eq!(options[3], "do nothing");
    let request = requests.recv().unwrap();
    assert!(request["prompt"].as_str().unwrap().ends_with("We: ctx\nYou:\n"));
    assert_eq!(request["temperature"], 0);
}
