//! End-to-end conformance of the HTTP pair: a remote client talking to a
//! mock server that wraps a built-in must be byte-indistinguishable from
//! calling the built-in directly.

use clicksim_core::click::Click;
use clicksim_core::env::{run_episode, EpisodeLimits, EpisodeSetup};
use clicksim_core::image::Image;
use clicksim_core::mask::Mask;
use clicksim_core::oracle::OracleConfig;
use clicksim_core::policy::{OraclePolicy, Policy, ScriptedPolicy};
use clicksim_core::records::TrajectoryRecord;
use clicksim_core::segment::{
    DiscSegmenter, PromptSet, SegResult, Segmenter, SegmenterError,
};
use clicksim_core::traj::Termination;
use clicksim_remote::{MockPolicyServer, MockSegmenterServer, RemotePolicy, RemoteSegmenter};
use std::sync::{Arc, Mutex};

fn test_image(w: usize, h: usize) -> Image {
    let mut img = Image::new_gray(w, h);
    for r in 0..h {
        for c in 0..w {
            img.set_pixel(r, c, &[((r * 37 + c * 11) % 251) as u8]);
        }
    }
    img
}

fn blob_gt(w: usize, h: usize) -> Mask {
    Mask::from_fn(w, h, |r, c| {
        let dr = r as f64 - h as f64 / 2.0;
        let dc = c as f64 - w as f64 / 2.0;
        dr * dr + dc * dc <= 40.0
    })
}

#[test]
fn predict_matches_local_including_prior_continuation() {
    let server = MockSegmenterServer::start(Box::new(DiscSegmenter::default()), 0).unwrap();
    let remote = RemoteSegmenter::new(server.url());
    let local = DiscSegmenter::default();
    let image = test_image(24, 20);

    let first_clicks = vec![Click::positive(5, 6)];
    let l1 = local.predict(&image, &PromptSet::from_clicks(first_clicks.clone())).unwrap();
    let r1 = remote.predict(&image, &PromptSet::from_clicks(first_clicks.clone())).unwrap();
    assert_eq!(l1.candidates.len(), r1.candidates.len());
    assert_eq!(l1.best().mask, r1.best().mask);
    assert_eq!(l1.best().score, r1.best().score);
    assert_eq!(l1.prior.payload, r1.prior.payload);
    assert_eq!(r1.prior.tag, "remote");

    // Continue each session with its own prior; the remote one crossed the
    // wire twice and must still replay only the new click.
    let mut clicks = first_clicks;
    clicks.push(Click::negative(12, 12));
    let l2 = local
        .predict(&image, &PromptSet { clicks: clicks.clone(), prior: Some(l1.prior) })
        .unwrap();
    let r2 = remote
        .predict(&image, &PromptSet { clicks, prior: Some(r1.prior) })
        .unwrap();
    assert_eq!(l2.best().mask, r2.best().mask);
    assert_eq!(l2.best().score, r2.best().score);
    assert_eq!(l2.prior.payload, r2.prior.payload);
}

#[test]
fn oracle_episode_over_the_wire_is_byte_identical() {
    let image = test_image(32, 32);
    let gt = blob_gt(32, 32);
    let run = |seg: &dyn Segmenter| {
        let mut policy = OraclePolicy::new(
            gt.clone(),
            "lesion".to_string(),
            "lesion".to_string(),
            OracleConfig { annotate_radius: true, ..OracleConfig::default() },
            11,
        );
        let setup = EpisodeSetup {
            id: "wire-check",
            question: "Please segment the lesion.",
            image: &image,
            initial_mask: None,
            gt: Some(&gt),
            limits: EpisodeLimits::default(),
            overlay_alpha: 0.45,
            store: None,
        };
        let traj = run_episode(&setup, &mut policy, seg).unwrap();
        serde_json::to_string(&TrajectoryRecord::from_trajectory(&traj, "fp")).unwrap()
    };
    let server = MockSegmenterServer::start(Box::new(DiscSegmenter::default()), 0).unwrap();
    let local = run(&DiscSegmenter::default());
    let remote = run(&RemoteSegmenter::new(server.url()));
    assert_eq!(local, remote);
    assert!(local.contains("\"termination\":\"answered\""));
}

struct NoCandidateSegmenter;

impl Segmenter for NoCandidateSegmenter {
    fn kind(&self) -> &'static str {
        "empty"
    }

    fn predict(&self, _: &Image, _: &PromptSet) -> Result<SegResult, SegmenterError> {
        Err(SegmenterError::NoCandidates)
    }
}

#[test]
fn failure_modes_split_into_transport_and_protocol() {
    // Nothing listens here: transport.
    let dead = RemoteSegmenter::new("http://127.0.0.1:9");
    let image = test_image(8, 8);
    let prompts = PromptSet::from_clicks(vec![Click::positive(2, 2)]);
    match dead.predict(&image, &prompts) {
        Err(SegmenterError::Transport { .. }) => {}
        other => panic!("expected transport error, got {other:?}"),
    }

    // Served error statuses are protocol errors carrying the body.
    let failing_server = MockSegmenterServer::start(Box::new(NoCandidateSegmenter), 0).unwrap();
    let remote = RemoteSegmenter::new(failing_server.url());
    match remote.predict(&image, &prompts) {
        Err(SegmenterError::Protocol { message, payload }) => {
            assert!(message.contains("422"), "{message}");
            assert!(payload.unwrap().contains("no candidates"));
        }
        other => panic!("expected protocol error, got {other:?}"),
    }

    // Wrong route: 404, still protocol.
    let policy_only = MockPolicyServer::start(|_| String::new()).unwrap();
    let wrong = RemoteSegmenter::new(policy_only.url());
    match wrong.predict(&image, &prompts) {
        Err(SegmenterError::Protocol { message, .. }) => assert!(message.contains("404")),
        other => panic!("expected protocol error, got {other:?}"),
    }
}

#[test]
fn remote_policy_replays_a_script_byte_identically() {
    let image = test_image(24, 24);
    let gt = blob_gt(24, 24);
    // Author the script with a local oracle episode, then serve it remotely.
    let seg = DiscSegmenter::default();
    let gold = {
        let mut policy = OraclePolicy::new(
            gt.clone(),
            "lesion".to_string(),
            "lesion".to_string(),
            OracleConfig { annotate_radius: true, ..OracleConfig::default() },
            3,
        );
        let setup = EpisodeSetup {
            id: "gold",
            question: "Please segment the lesion.",
            image: &image,
            initial_mask: None,
            gt: Some(&gt),
            limits: EpisodeLimits::default(),
            overlay_alpha: 0.45,
            store: None,
        };
        run_episode(&setup, &mut policy, &seg).unwrap()
    };
    let mut turns: Vec<String> = gold.steps.iter().map(|s| s.raw.clone()).collect();
    turns.push(gold.final_raw.clone().unwrap());

    let seen_lengths = Arc::new(Mutex::new(Vec::new()));
    let lengths = seen_lengths.clone();
    let script = turns.clone();
    let cursor = Arc::new(Mutex::new(0usize));
    let server = MockPolicyServer::start(move |req| {
        lengths.lock().unwrap().push(req.transcript.len());
        let mut i = cursor.lock().unwrap();
        let turn = script[*i].clone();
        *i += 1;
        turn
    })
    .unwrap();

    let run = |policy: &mut dyn Policy| {
        let setup = EpisodeSetup {
            id: "replay",
            question: "Please segment the lesion.",
            image: &image,
            initial_mask: None,
            gt: Some(&gt),
            limits: EpisodeLimits::default(),
            overlay_alpha: 0.45,
            store: None,
        };
        let traj = run_episode(&setup, policy, &seg).unwrap();
        assert_eq!(traj.termination, Termination::Answered);
        serde_json::to_string(&TrajectoryRecord::from_trajectory(&traj, "fp")).unwrap()
    };
    let mut remote = RemotePolicy::new(server.url(), 0.45);
    let remote_record = run(&mut remote);
    let mut scripted = ScriptedPolicy::new(turns.clone());
    let local_record = run(&mut scripted);
    assert_eq!(remote_record, local_record);
    // The transcript grew by one turn per request.
    let lens = seen_lengths.lock().unwrap();
    assert_eq!(*lens, (0..turns.len()).collect::<Vec<_>>());
}
