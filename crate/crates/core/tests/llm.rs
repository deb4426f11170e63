use std::cell::RefCell;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use base64::Engine as _;
use serde_json::Value;
use timerbed::llm::mock::{MockProvider, MockScript};
use timerbed::llm::openai::OpenAiProvider;
use timerbed::llm::{
    query_until_answer, send_with_backoff, Backoff, ChatProvider, Completion, LlmError, ProviderConfig, Usage,
    UsageSource,
};
use timerbed::prompt::{build_planning_prompt, build_solving_prompt, build_zst, DemoInput, Demos, Part};
use timerbed::task::{builtin_task_registry, ClassLetter};
use timerbed::viz::{ImageDetail, RenderedImage};

struct Captured {
    head: String,
    body: Value,
}

/// Serves one canned response per entry, in order, and hands back what it
/// received.
fn serve(responses: Vec<(u16, &'static str, String)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, extra_headers, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                head.push_str(&line);
            }
            let len: usize = head
                .lines()
                .find_map(|l| {
                    let (k, v) = l.split_once(':')?;
                    k.eq_ignore_ascii_case("content-length").then(|| v.trim().parse().unwrap())
                })
                .unwrap_or(0);
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let _ = tx.send(Captured {
                head,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let resp = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n{extra_headers}\r\n{body}",
                body.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    (url, rx)
}

fn ok_body(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 321, "completion_tokens": 12},
    })
    .to_string()
}

fn config(url: &str) -> ProviderConfig {
    ProviderConfig {
        base_url: url.to_string(),
        request_timeout_s: 10.0,
        ..Default::default()
    }
}

fn image(tag: &str) -> RenderedImage {
    RenderedImage {
        png_bytes: tag.as_bytes().to_vec(),
        width_px: 640,
        height_px: 480,
        detail: ImageDetail::Low,
    }
}

#[test]
fn openai_wire_format_with_three_images() {
    let (url, rx) = serve(vec![(200, "", ok_body("Answer Choice: (B)"))]);
    let provider = OpenAiProvider::new(config(&url), "sk-test".into());
    let spec = &builtin_task_registry()["CTU"];
    let demos = Demos {
        items: spec
            .letters()
            .map(|l| DemoInput {
                id: format!("d{}", l.as_char()),
                data: Part::Image(image(&format!("demo-{}", l.as_char()))),
                answer: l,
            })
            .collect(),
        demos_per_class: 1,
    };
    let bundle = build_solving_prompt(&image("target"), spec, None, Some(&demos)).unwrap();
    let c = provider.send(&bundle).unwrap();
    assert_eq!(c.text, "Answer Choice: (B)");
    assert_eq!(
        c.usage,
        Usage {
            input_tokens: 321,
            output_tokens: 12,
            input_source: UsageSource::Provider
        }
    );

    let got = rx.recv_timeout(Duration::from_secs(5)).unwrap();
    assert!(got.head.starts_with("POST /v1/chat/completions "), "{}", got.head);
    assert!(got.head.to_ascii_lowercase().contains("authorization: bearer sk-test"));
    let body = got.body;
    assert_eq!(body["model"], "gpt-4o");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "user");
    let content = body["messages"][0]["content"].as_array().unwrap();
    let images: Vec<&Value> = content.iter().filter(|p| p["type"] == "image_url").collect();
    assert_eq!(images.len(), 3);
    let b64 = base64::engine::general_purpose::STANDARD;
    for (img, tag) in images.iter().zip(["demo-A", "demo-B", "target"]) {
        let url = img["image_url"]["url"].as_str().unwrap();
        let payload = url.strip_prefix("data:image/png;base64,").unwrap();
        assert_eq!(b64.decode(payload).unwrap(), tag.as_bytes());
        assert_eq!(img["image_url"]["detail"], "low");
    }
    let text: String = content
        .iter()
        .filter_map(|p| p["text"].as_str())
        .collect();
    assert_eq!(text, bundle.text());
}

#[test]
fn status_codes_map_to_errors() {
    let (url, _rx) = serve(vec![
        (401, "", "{}".into()),
        (429, "retry-after: 7\r\n", "{}".into()),
        (503, "", "{}".into()),
        (400, "", r#"{"error":{"message":"bad"}}"#.into()),
    ]);
    let provider = OpenAiProvider::new(config(&url), "k".into());
    let bundle = build_planning_prompt(&builtin_task_registry()["ECG"]).unwrap();
    assert!(matches!(provider.send(&bundle), Err(LlmError::AuthFailed(_))));
    assert!(matches!(
        provider.send(&bundle),
        Err(LlmError::RateLimited { retry_after: Some(d) }) if d == Duration::from_secs(7)
    ));
    assert!(matches!(provider.send(&bundle), Err(LlmError::Transport(_))));
    assert!(matches!(provider.send(&bundle), Err(LlmError::ProviderError(_))));
}

#[test]
fn missing_key_is_auth_failure() {
    let cfg = ProviderConfig {
        api_key_env: "TIMERBED_TEST_SURELY_UNSET_KEY".into(),
        ..Default::default()
    };
    assert!(matches!(OpenAiProvider::from_env(cfg), Err(LlmError::AuthFailed(_))));
}

#[test]
fn backoff_retries_transient_then_succeeds() {
    let script: MockScript = serde_json::from_value(serde_json::json!({
        "sequence": [
            {"error": "rate_limited", "message": "slow down"},
            {"error": "transport", "message": "reset"},
            "Answer Choice: (A)"
        ]
    }))
    .unwrap();
    let provider = MockProvider::from_script(script);
    let bundle = build_zst(&Part::Text("1, 2".into()), &builtin_task_registry()["CTU"]).unwrap();
    let slept = RefCell::new(Vec::new());
    let backoff = Backoff::default();
    let c = send_with_backoff(&provider, &bundle, 4, &backoff, &|d| slept.borrow_mut().push(d)).unwrap();
    assert_eq!(c.text, "Answer Choice: (A)");
    let slept = slept.into_inner();
    assert_eq!(slept.len(), 2);
    for (i, d) in slept.iter().enumerate() {
        assert!(*d <= backoff.ceiling(i as u32));
    }
}

#[test]
fn backoff_gives_up_and_does_not_retry_auth() {
    let script: MockScript = serde_json::from_value(serde_json::json!({
        "sequence": [
            {"error": "transport", "message": "1"},
            {"error": "transport", "message": "2"},
            {"error": "transport", "message": "3"},
            {"error": "auth", "message": "no"}
        ]
    }))
    .unwrap();
    let provider = MockProvider::from_script(script);
    let bundle = build_zst(&Part::Text("1".into()), &builtin_task_registry()["CTU"]).unwrap();
    let r = send_with_backoff(&provider, &bundle, 2, &Backoff::default(), &|_| {});
    assert!(matches!(r, Err(LlmError::Transport(_))));
    assert_eq!(provider.request_count(), 3);
    let r = send_with_backoff(&provider, &bundle, 2, &Backoff::default(), &|_| {});
    assert!(matches!(r, Err(LlmError::AuthFailed(_))));
    assert_eq!(provider.request_count(), 4);
}

#[test]
fn mock_keys_resolve_in_order() {
    let spec = &builtin_task_registry()["CTU"];
    let mut bundle = build_zst(&Part::Text("1".into()), spec).unwrap();
    bundle.target_id = Some("s1".into());
    let fp = bundle.fingerprint();
    let script = MockScript::keyed([(fp.as_str(), "by fingerprint"), ("CTU:s1", "by id"), ("CTU", "by task")]);
    let p = MockProvider::from_script(script);
    assert_eq!(p.send(&bundle).unwrap().text, "by fingerprint");

    let p = MockProvider::from_script(MockScript::keyed([("CTU:s1", "by id"), ("CTU", "by task"), ("*", "any")]));
    assert_eq!(p.send(&bundle).unwrap().text, "by id");
    bundle.target_id = Some("s2".into());
    assert_eq!(p.send(&bundle).unwrap().text, "by task");

    let plan = build_planning_prompt(spec).unwrap();
    let p = MockProvider::from_script(MockScript::keyed([("plan:CTU", "time-domain"), ("CTU", "x")]));
    assert_eq!(p.send(&plan).unwrap().text, "time-domain");
    let rec = p.requests();
    assert_eq!(rec.len(), 1);
    assert_eq!(rec[0].image_count, 0);

    let p = MockProvider::from_script(MockScript::sequence(["one"]));
    p.send(&plan).unwrap();
    assert!(matches!(p.send(&plan), Err(LlmError::ScriptExhausted(_))));
}

fn completion(text: &str, input: u64, output: u64) -> Completion {
    Completion {
        text: text.into(),
        usage: Usage {
            input_tokens: input,
            output_tokens: output,
            input_source: UsageSource::Provider,
        },
        latency_ms: 10,
    }
}

#[test]
fn answer_retries_sum_usage() {
    let bundle = build_zst(&Part::Text("1".into()), &builtin_task_registry()["CTU"]).unwrap();
    let replies = RefCell::new(vec![completion("(B)", 100, 3), completion("hmm", 100, 5), completion("no idea", 100, 7)]);
    let parse = |s: &str| s.trim().strip_prefix("(").and_then(|r| r.chars().next()).and_then(ClassLetter::from_char);
    let (trace, c) = query_until_answer(&bundle, 5, |_| Ok(replies.borrow_mut().pop().unwrap()), parse).unwrap();
    assert_eq!(trace.retries_used, 2);
    assert_eq!(trace.parsed_choice, ClassLetter::from_char('B'));
    assert_eq!((c.usage.input_tokens, c.usage.output_tokens, c.latency_ms), (300, 15, 30));

    let mut sent = 0;
    let r = query_until_answer(
        &bundle,
        4,
        |_| {
            sent += 1;
            Ok(completion("nothing", 50, 1))
        },
        parse,
    );
    match r {
        Err(LlmError::ExhaustedRetries { attempts, usage, last_raw }) => {
            assert_eq!((attempts, usage.input_tokens, usage.output_tokens), (4, 200, 4));
            assert_eq!(last_raw, "nothing");
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(sent, 4);
}
