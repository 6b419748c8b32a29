mod common;

use std::sync::Arc;

use common::{dead_url, MockServer};
use hirec_core::embed::{Embedder, HashedEmbedder, RemoteEmbedder};
use hirec_core::kb::{generate_synthetic_corpus, index_knowledge_base, DEFAULT_DEPARTMENTS};
use hirec_core::pipeline::Engine;
use hirec_core::reason::{ChatReasoner, ContextHit, Layer, MockReasoner, Reasoner, ReasoningContext};
use hirec_core::vecstore::RetrievalHit;
use hirec_core::weigh::{Candidate, HeuristicWeigher, RemoteWeigher, ScoreRequest, Weigher};
use hirec_core::{
    AblationConfig, Document, DocumentId, PatientQuery, PipelineParams, RemoteEndpoint, Tier,
    UrgencyLevel,
};
use serde_json::{json, Value};

fn endpoint(url: &str) -> RemoteEndpoint {
    RemoteEndpoint::new(url).with_timeout_ms(2_000)
}

fn embed_reply(body: &str) -> String {
    let req: Value = serde_json::from_str(body).unwrap();
    let data: Vec<Value> = req["input"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| {
            let len = t.as_str().unwrap().len() as f64;
            json!({"embedding": [len, 1.0, 0.0, 2.0]})
        })
        .collect();
    json!({ "data": data }).to_string()
}

#[test]
fn remote_embedder_discovers_dimension_and_sends_key() {
    let server = MockServer::start(|_, body| (200, embed_reply(body)));
    let e = RemoteEmbedder::new(endpoint(&server.url).with_api_key(Some("sekret".into())), "m");
    assert_eq!(e.dimension(), None);
    let v = e.embed("abc").unwrap();
    assert_eq!(e.dimension(), Some(4));
    assert!((v.norm() - 1.0).abs() < 1e-6);
    let batch = e.embed_batch(&["a", "bb", "ccc"]).unwrap();
    assert_eq!(batch[2], v);
    let req = &server.requests.lock().unwrap()[0];
    assert!(req.headers.iter().any(|h| h == "authorization: Bearer sekret"));
    let body: Value = serde_json::from_str(&req.body).unwrap();
    assert_eq!(body["model"], "m");
}

#[test]
fn api_key_never_in_debug_output() {
    let ep = endpoint("http://x/").with_api_key(Some("sekret".into()));
    let dbg = format!("{ep:?}");
    assert!(!dbg.contains("sekret"));
    assert!(dbg.contains("redacted"));
    assert!(!serde_json::to_string(&ep).unwrap().contains("sekret"));
}

#[test]
fn transient_server_errors_are_retried() {
    let server = MockServer::start(|n, body| if n < 2 { (503, "{}".into()) } else { (200, embed_reply(body)) });
    let e = RemoteEmbedder::new(endpoint(&server.url), "m");
    e.embed("hello").unwrap();
    assert_eq!(server.count(), 3);
}

#[test]
fn persistent_failures_are_unavailable() {
    let server = MockServer::start(|_, _| (500, "{}".into()));
    let e = RemoteEmbedder::new(endpoint(&server.url), "m");
    assert_eq!(e.embed("hello").unwrap_err().code(), "REMOTE_UNAVAILABLE");
    assert_eq!(server.count(), 3);

    let e = RemoteEmbedder::new(endpoint(&dead_url()), "m");
    assert_eq!(e.embed("hello").unwrap_err().code(), "REMOTE_UNAVAILABLE");
}

#[test]
fn malformed_replies_are_bad_responses() {
    let server = MockServer::start(|n, _| match n {
        0 => (200, "not json".into()),
        1 => (200, json!({"data": [{"embedding": [0.0, 0.0]}]}).to_string()),
        _ => (400, "{}".into()),
    });
    let e = RemoteEmbedder::new(endpoint(&server.url), "m");
    assert_eq!(e.embed("a").unwrap_err().code(), "REMOTE_BAD_RESPONSE");
    assert_eq!(e.embed("a").unwrap_err().code(), "REMOTE_BAD_RESPONSE");
    assert_eq!(e.embed("a").unwrap_err().code(), "REMOTE_BAD_RESPONSE");
    assert_eq!(server.count(), 3, "client errors are not retried");
}

fn chat_reply(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn item_ctx() -> ReasoningContext {
    let doc = Document::new(
        DocumentId::new("item-ecg").unwrap(),
        Tier::Item,
        "cardiology",
        "Electrocardiogram",
        "12-lead ECG",
        [("test_id".to_string(), "ecg".to_string())].into(),
    )
    .unwrap();
    let mut ctx = ReasoningContext::new(Layer::Item, PatientQuery::new("palpitations"));
    ctx.hits = vec![ContextHit {
        hit: RetrievalHit {
            doc_id: doc.id().clone(),
            similarity: 0.4,
        },
        document: doc,
    }];
    ctx
}

#[test]
fn chat_reasoner_repairs_once() {
    let valid = r#"{"tests":[{"test_id":"ecg","confidence":0.8,"supporting_doc_ids":["item-ecg","item-invented"]}],"flags":["urgent_case"],"summary":"ok"}"#;
    let server = MockServer::start(move |n, _| {
        if n == 0 {
            (200, chat_reply("Let me think about this patient."))
        } else {
            (200, chat_reply(&format!("Here you go: {valid}")))
        }
    });
    let r = ChatReasoner::new(endpoint(&server.url), "model-x");
    let out = r.analyze(&item_ctx()).unwrap();
    assert_eq!(out.tests.len(), 1);
    assert_eq!(out.tests[0].supporting_doc_ids, [DocumentId::new("item-ecg").unwrap()]);
    let bodies = server.bodies();
    assert_eq!(bodies.len(), 2);
    let first: Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(first["temperature"], 0.0);
    assert_eq!(first["messages"].as_array().unwrap().len(), 2);
    let second: Value = serde_json::from_str(&bodies[1]).unwrap();
    let msgs = second["messages"].as_array().unwrap();
    assert_eq!(msgs.len(), 4);
    assert_eq!(msgs[2]["role"], "assistant");
}

#[test]
fn chat_reasoner_gives_up_after_repair() {
    let server = MockServer::start(|_, _| (200, chat_reply("I cannot help with that.")));
    let r = ChatReasoner::new(endpoint(&server.url), "m");
    assert_eq!(r.analyze(&item_ctx()).unwrap_err().code(), "UNPARSEABLE_RESPONSE");
    assert_eq!(server.count(), 2);
    let r = ChatReasoner::new(endpoint(&dead_url()), "m");
    assert_eq!(r.analyze(&item_ctx()).unwrap_err().code(), "BACKEND_UNAVAILABLE");
}

fn score_req() -> ScoreRequest {
    ScoreRequest {
        candidate: Candidate::Test(hirec_core::reason::TestCandidate {
            test_id: "ecg".into(),
            name: "ECG".into(),
            department: "cardiology".into(),
            confidence: 0.5,
            urgency: UrgencyLevel::Priority,
            rationale: "r".into(),
            supporting_doc_ids: vec![],
        }),
        query: PatientQuery::new("palpitations"),
        memory: vec![],
    }
}

#[test]
fn remote_weigher_contract() {
    let server = MockServer::start(|n, _| match n {
        0 => (200, r#"{"weight":0.25}"#.into()),
        1 => (200, r#"{"weight":1.7}"#.into()),
        _ => (200, r#"{"score":1}"#.into()),
    });
    let w = RemoteWeigher::new(endpoint(&server.url));
    assert_eq!(w.score(&score_req()).unwrap().value(), 0.25);
    assert_eq!(w.score(&score_req()).unwrap().value(), 1.0);
    assert_eq!(w.score(&score_req()).unwrap_err().code(), "REMOTE_BAD_RESPONSE");
    let sent: ScoreRequest = serde_json::from_str(&server.bodies()[0]).unwrap();
    assert_eq!(sent, score_req());
}

fn chat_pipeline_reply(body: &str) -> String {
    let req: Value = serde_json::from_str(body).unwrap();
    let prompt = req["messages"][1]["content"].as_str().unwrap();
    if prompt.contains("\"departments\"") {
        chat_reply(r#"{"departments":[{"department":"Cardiology","confidence":0.9,"urgency":"URGENT","rationale":"exertional chest pain"}],"flags":["urgent_case"],"summary":"cardiac"}"#)
    } else {
        chat_reply(
            r#"{"tests":[{"test_id":"troponin_i","name":"Troponin","department":"cardiology","confidence":0.95,"urgency":"URGENT","rationale":"rule out ACS","supporting_doc_ids":["item-troponin_i","item-unknown"]},{"test_id":"made_up","confidence":0.9}],"flags":[],"summary":"tests"}"#,
        )
    }
}

#[test]
fn pipeline_with_chat_backend_stays_in_context() {
    let server = MockServer::start(|_, body| (200, chat_pipeline_reply(body)));
    let corpus = generate_synthetic_corpus(7, &DEFAULT_DEPARTMENTS, 4);
    let index = index_knowledge_base(&corpus.kb, &HashedEmbedder::default(), 256).unwrap();
    let engine = Engine::new(
        Arc::new(corpus.kb),
        Arc::new(index),
        Arc::new(HashedEmbedder::default()),
        Arc::new(ChatReasoner::new(endpoint(&server.url), "m")),
        Arc::new(HeuristicWeigher),
    )
    .unwrap();
    let r = engine
        .recommend(
            &PatientQuery::new("chest pain on exertion"),
            &AblationConfig::full(),
            &PipelineParams::default(),
        )
        .unwrap();
    let ids: Vec<&str> = r.recommendations.iter().map(|x| x.test_id.as_str()).collect();
    assert_eq!(ids, ["troponin_i"]);
    assert_eq!(r.recommendations[0].supporting_doc_ids, [DocumentId::new("item-troponin_i").unwrap()]);
    assert_eq!(server.count(), 3);
}

#[test]
fn backend_failures_are_annotated_with_layer() {
    let corpus = generate_synthetic_corpus(7, &DEFAULT_DEPARTMENTS, 4);
    let index = index_knowledge_base(&corpus.kb, &HashedEmbedder::default(), 256).unwrap();
    let engine = Engine::new(
        Arc::new(corpus.kb),
        Arc::new(index),
        Arc::new(HashedEmbedder::default()),
        Arc::new(MockReasoner::default()),
        Arc::new(RemoteWeigher::new(endpoint(&dead_url()))),
    )
    .unwrap();
    let err = engine
        .recommend(&PatientQuery::new("chest pain"), &AblationConfig::full(), &PipelineParams::default())
        .unwrap_err();
    assert_eq!(err.layer(), Some(Layer::Root));
    assert!(err.is_unavailable());
    assert!(!err.is_input_error());
    assert_eq!(err.code(), "REMOTE_UNAVAILABLE");
}
