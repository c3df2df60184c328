//! Run the HTTP service on a local port and talk to it with plain HTTP/1.1.
//!
//!     cargo run --example http_service

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;

use hyperfeed::service::{router, AppState, NOW_HEADER};
use hyperfeed::{Engine, EngineConfig, TopicLexicon};

const NOW: &str = "2024-05-01T12:00:00Z";

fn call(addr: SocketAddr, method: &str, path: &str, body: &str) -> String {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nhost: localhost\r\n{NOW_HEADER}: {NOW}\r\n\
         content-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut reply = String::new();
    stream.read_to_string(&mut reply).unwrap();
    let status = reply.lines().next().unwrap_or_default().to_string();
    let payload = reply.split("\r\n\r\n").nth(1).unwrap_or_default();
    format!("{status}  {payload}")
}

fn main() {
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    // Test mode lets requests pin the clock with the header; a fixed seed
    // makes exploration repeatable.
    let state = AppState {
        engine: Arc::new(Engine::new(EngineConfig::default(), TopicLexicon::default()).unwrap()),
        test_mode: true,
        seed: Some(1),
    };
    runtime.spawn(async move { axum::serve(listener, router(state)).await });
    println!("listening on {addr}\n");

    let news = |id: &str, text: &str, category: &str, created: &str| {
        format!(
            r##"{{"id":"{id}","description":"{text}","category":"{category}","hashtags":["#trd"],
                "location":{{"lat":63.4305,"lon":10.3951}},"created_at":"{created}","author_id":"kari"}}"##
        )
    };
    let steps = [
        ("GET", "/v1/health".to_string(), String::new()),
        ("POST", "/v1/news".into(), news("n1", "Bus detour on the bridge", "traffic", "2024-05-01T11:00:00Z")),
        ("POST", "/v1/news".into(), news("n2", "New sushi place", "food", "2024-05-01T10:00:00Z")),
        ("POST", "/v1/news".into(), news("n1", "duplicate", "traffic", NOW)),
        ("POST", "/v1/news".into(), r#"{"id":"bad","category":"x","author_id":"a","created_at":"2024-05-01T10:00:00Z","location":{"lat":91,"lon":0}}"#.into()),
        ("POST", "/v1/users/ola/follows".into(), r#"{"followee_id":"kari"}"#.into()),
        ("GET", "/v1/recommendations?user_id=ola&lat=63.43&lon=10.39&limit=5".into(), String::new()),
        ("POST", "/v1/events".into(), r#"{"user_id":"ola","news_id":"n1","kind":"read"}"#.into()),
        ("POST", "/v1/events".into(), r#"{"user_id":"ola","news_id":"n2","kind":"share"}"#.into()),
        ("GET", "/v1/recommendations?user_id=ola&lat=63.43&lon=10.39&limit=5".into(), String::new()),
        ("GET", "/v1/users/ola/profile".into(), String::new()),
        ("GET", "/v1/users/nobody/profile".into(), String::new()),
    ];
    for (method, path, body) in steps {
        println!("{method} {path}\n  -> {}\n", call(addr, method, &path, &body));
    }
}
