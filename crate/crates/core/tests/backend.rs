mod common;

use std::sync::atomic::Ordering;
use std::time::Duration;

use common::FaultServer;
use prevsim::backend::{Backend, BackendConfig, CompletionRequest, LiveBackend};
use prevsim::error::BackendError;

fn client(url: &str, f: impl FnOnce(&mut BackendConfig)) -> LiveBackend {
    let mut c = BackendConfig {
        endpoint: url.to_string(),
        base_backoff_ms: 100,
        max_backoff_ms: 10_000,
        timeout_secs: 5.0,
        api_key: Some("test".into()),
        ..BackendConfig::default()
    };
    f(&mut c);
    LiveBackend::new(c).unwrap()
}

#[test]
fn rate_limits_back_off_exponentially() {
    let server = FaultServer::start(|n| if n < 2 { 429 } else { 200 }, Duration::ZERO);
    let b = client(&server.url, |_| {});
    let r = b.complete(&CompletionRequest::new("hi")).unwrap();
    assert_eq!(r.text, "ok");
    assert_eq!(r.attempts, 3);
    assert_eq!(r.retry_delays, vec![Duration::from_millis(100), Duration::from_millis(200)]);
    let gaps = server.gaps();
    assert_eq!(gaps.len(), 2);
    let ratio = gaps[1].as_secs_f64() / gaps[0].as_secs_f64();
    assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}, gaps {gaps:?}");
}

#[test]
fn client_errors_are_not_retried() {
    let server = FaultServer::start(|_| 400, Duration::ZERO);
    let b = client(&server.url, |_| {});
    match b.complete(&CompletionRequest::new("hi")) {
        Err(BackendError::Permanent { status, .. }) => assert_eq!(status, 400),
        other => panic!("{other:?}"),
    }
    assert_eq!(server.requests.load(Ordering::SeqCst), 1);
}

#[test]
fn retries_are_bounded() {
    let server = FaultServer::start(|_| 503, Duration::ZERO);
    let b = client(&server.url, |c| {
        c.max_retries = 2;
        c.base_backoff_ms = 5;
    });
    match b.complete(&CompletionRequest::new("hi")) {
        Err(BackendError::Transient { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("{other:?}"),
    }
    assert_eq!(server.requests.load(Ordering::SeqCst), 3);
}

#[test]
fn slow_server_times_out() {
    let server = FaultServer::start(|_| 200, Duration::from_millis(1500));
    let b = client(&server.url, |c| {
        c.timeout_secs = 0.2;
        c.max_retries = 1;
        c.base_backoff_ms = 5;
    });
    match b.complete(&CompletionRequest::new("hi")) {
        Err(BackendError::Timeout { attempts }) => assert_eq!(attempts, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn in_flight_requests_respect_the_cap() {
    let server = FaultServer::start(|_| 200, Duration::from_millis(40));
    let b = client(&server.url, |c| c.max_concurrency = 4);
    std::thread::scope(|s| {
        for _ in 0..16 {
            s.spawn(|| b.complete(&CompletionRequest::new("hi")).unwrap());
        }
    });
    let peak = server.peak.load(Ordering::SeqCst);
    assert!(peak <= 4, "peak {peak}");
    assert!(peak >= 2, "requests never overlapped");
    assert_eq!(b.request_count(), 16);
}

#[test]
fn seed_and_model_reach_the_wire() {
    // the server ignores the body; this checks the request is well formed end to end
    let server = FaultServer::start(|_| 200, Duration::ZERO);
    let b = client(&server.url, |c| c.model = "m".into());
    let r = b.complete(&CompletionRequest::new("hi").with_seed(3)).unwrap();
    assert_eq!(r.usage.unwrap().total_tokens, Some(2));
    assert_eq!(b.info().model, "m");
}
