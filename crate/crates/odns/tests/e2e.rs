use std::collections::HashSet;
use std::net::IpAddr;
use std::time::Duration;

use odns::config::StubConfig;
use odns::core::policy::Striping;
use odns::core::wire::{ClientSubnet, DnsMessage, Edns, RecordType, OPTION_CLIENT_SUBNET};
use odns::core::{IdentityAnnouncement, Rcode, OPTION_IDENTITY, OPTION_SEALED_ANSWER};
use odns::net;
use odns::stub::{Outcome, Stub};
use odns::testnet::{self, TestRecursive, Testbed, TestbedOptions, RECURSIVE_IP, STUB_IP};

fn a_records(msg: &DnsMessage) -> Vec<[u8; 4]> {
    msg.answers
        .iter()
        .filter(|r| r.rtype == RecordType::A)
        .map(|r| r.rdata.as_slice().try_into().unwrap())
        .collect()
}

fn stub_queries(tb: &Testbed) -> Vec<DnsMessage> {
    tb.recursive
        .captures()
        .into_iter()
        .filter(|c| c.from.ip() == IpAddr::V4(STUB_IP))
        .map(|c| DnsMessage::decode(&c.query).unwrap())
        .collect()
}

#[tokio::test]
async fn resolves_scripted_answer() {
    let tb = Testbed::start(TestbedOptions::default()).await.unwrap();
    tb.upstream.set_address("example.test", [10, 0, 0, 1]);
    let reply = tb.query("example.test", RecordType::A).await.unwrap();
    assert_eq!(reply.rcode(), Rcode::NOERROR);
    assert_eq!(a_records(&reply), vec![[10, 0, 0, 1]]);
    assert_eq!(reply.answers[0].ttl, testnet::SCRIPTED_TTL);
    assert_eq!(reply.questions[0].name.to_string(), "example.test");
}

#[tokio::test]
async fn reply_keeps_client_id_and_question_case() {
    let tb = Testbed::start(TestbedOptions::default()).await.unwrap();
    let query = DnsMessage::query(0x4242, "WwW.Example.TEST".parse().unwrap(), RecordType::A);
    let reply = net::exchange(
        "127.0.0.1:0".parse().unwrap(),
        tb.stub_addr,
        &query,
        Duration::from_secs(5),
        1,
    )
    .await
    .unwrap();
    assert_eq!(reply.header.id, 0x4242);
    assert_eq!(reply.questions, query.questions);
    assert_eq!(a_records(&reply), vec![testnet::scripted_address("www.example.test")]);
}

#[tokio::test]
async fn stub_cache_hit_sends_nothing_upstream() {
    let tb = Testbed::start(TestbedOptions::default()).await.unwrap();
    let first = tb.query("cached.example", RecordType::A).await.unwrap();
    let sent = stub_queries(&tb).len();
    let second = tb.query("CACHED.example", RecordType::A).await.unwrap();
    assert_eq!(stub_queries(&tb).len(), sent, "cache hit must not reach the recursive");
    assert_eq!(a_records(&first), a_records(&second));
    assert!(second.answers[0].ttl <= first.answers[0].ttl);
    assert_eq!(tb.upstream.query_count(), 1);
}

#[tokio::test]
async fn odns_queries_use_fresh_qnames_and_zero_ecs() {
    let tb = Testbed::start(TestbedOptions::default()).await.unwrap();
    // distinct qtypes defeat the stub cache while keeping the domain
    for qtype in [RecordType::A, RecordType::AAAA, RecordType::TXT, RecordType::MX] {
        tb.query("fresh.example", qtype).await.unwrap();
    }
    let queries = stub_queries(&tb);
    let names: HashSet<String> = queries.iter().map(|q| q.questions[0].name.to_string()).collect();
    // bootstrap plus four ODNS queries
    assert_eq!(queries.len(), 5);
    assert_eq!(names.len(), 5);
    for q in &queries {
        let ecs = ClientSubnet::from_option(q.edns_option(OPTION_CLIENT_SUBNET).unwrap()).unwrap();
        assert_eq!(ecs.source_prefix, 0);
        assert!(q.questions[0].name.ends_with(&tb.stub.config().odns_suffix));
    }
}

#[tokio::test]
async fn resolver_cache_serves_second_ciphertext() {
    let tb = Testbed::start(TestbedOptions::default()).await.unwrap();
    tb.query("shared.example", RecordType::A).await.unwrap();
    assert_eq!(tb.upstream.query_count(), 1);

    // a second stub has its own empty cache and its own session keys
    let mut cfg = StubConfig::new(vec![tb.recursive_addr], tb.stub.config().odns_suffix.clone());
    cfg.listen_address = "127.0.0.1:0".parse().unwrap();
    let other = Stub::new(cfg);
    other.bootstrap_identity().await.unwrap();
    let (reply, outcome) = other
        .handle_client_query(&DnsMessage::query(9, "shared.example".parse().unwrap(), RecordType::A))
        .await;
    assert_eq!(outcome, Outcome::OdnsOk);
    assert_eq!(a_records(&reply), vec![testnet::scripted_address("shared.example")]);
    assert_eq!(
        tb.upstream.query_count(),
        1,
        "resolver cache hit must not query upstream"
    );
}

#[tokio::test]
async fn negative_answers_are_cached() {
    let tb = Testbed::start(TestbedOptions::default()).await.unwrap();
    tb.upstream.set_nxdomain("missing.example");
    let first = tb.query("missing.example", RecordType::A).await.unwrap();
    assert_eq!(first.rcode(), Rcode::NXDOMAIN);
    let before = stub_queries(&tb).len();
    let second = tb.query("missing.example", RecordType::A).await.unwrap();
    assert_eq!(second.rcode(), Rcode::NXDOMAIN);
    assert_eq!(stub_queries(&tb).len(), before);
}

#[tokio::test]
async fn upstream_sees_plaintext_without_ecs_from_resolver_address() {
    let tb = Testbed::start(TestbedOptions::default()).await.unwrap();
    tb.query("scrub.example", RecordType::A).await.unwrap();
    let log = tb.upstream.queries();
    assert_eq!(log.len(), 1);
    assert_eq!(log[0].from.ip(), tb.resolver_addr.ip());
    assert_eq!(log[0].message.questions[0].name.to_string(), "scrub.example");
    assert!(log[0].message.edns_option(OPTION_CLIENT_SUBNET).is_none());
    let recursive_ip = IpAddr::V4(RECURSIVE_IP);
    assert!(!log[0]
        .raw
        .windows(4)
        .any(|w| IpAddr::from(<[u8; 4]>::try_from(w).unwrap()) == recursive_ip));
}

#[tokio::test]
async fn special_query_returns_identity() {
    let tb = Testbed::start(TestbedOptions::default()).await.unwrap();
    let special = odns::stub::special_name(&tb.stub.config().odns_suffix);
    let query = DnsMessage::query(7, special, RecordType::TXT);
    let reply = net::exchange(
        "127.0.0.1:0".parse().unwrap(),
        tb.resolver_addr,
        &query,
        Duration::from_secs(2),
        1,
    )
    .await
    .unwrap();
    assert_eq!(reply.rcode(), Rcode::NOERROR);
    assert!(reply.answers.is_empty());
    let edns: &Edns = reply.edns.as_ref().unwrap();
    assert_eq!(edns.ttl_field(), 0);
    let payload = &edns.option(OPTION_IDENTITY).unwrap().payload;
    assert_eq!(payload.len(), 64);
    let ann = IdentityAnnouncement::from_payload(payload).unwrap();
    ann.verify().unwrap();
    assert_eq!(&ann, tb.resolver.announcement());
    assert_eq!(tb.stub.identity().unwrap().name_label, ann.name_label);
}

#[tokio::test]
async fn special_with_extra_labels_takes_odns_path() {
    let tb = Testbed::start(TestbedOptions::default()).await.unwrap();
    let name = odns::stub::special_name(&tb.stub.config().odns_suffix)
        .prepend(["junk"])
        .unwrap();
    let query = DnsMessage::query(8, name, RecordType::TXT);
    let reply = net::exchange(
        "127.0.0.1:0".parse().unwrap(),
        tb.resolver_addr,
        &query,
        Duration::from_secs(2),
        1,
    )
    .await
    .unwrap();
    assert_eq!(reply.rcode(), Rcode::FORMERR);
    assert!(reply.edns_option(OPTION_IDENTITY).is_none());
}

#[tokio::test]
async fn odns_responses_have_zero_ttls() {
    let tb = Testbed::start(TestbedOptions::default()).await.unwrap();
    for i in 0..20 {
        tb.query(&format!("ttl{i}.example"), RecordType::A).await.unwrap();
    }
    let mut seen = 0;
    for c in tb.recursive.captures() {
        let response = DnsMessage::decode(c.response.as_ref().unwrap()).unwrap();
        if response.edns_option(OPTION_SEALED_ANSWER).is_none() {
            continue;
        }
        seen += 1;
        assert!(response.answers.is_empty());
        let all = response
            .answers
            .iter()
            .chain(&response.authorities)
            .chain(&response.additionals);
        assert!(all.into_iter().all(|r| r.ttl == 0));
        assert_eq!(response.edns.unwrap().ttl_field(), 0);
    }
    assert_eq!(seen, 20);
}

#[tokio::test]
async fn round_robin_spreads_queries_evenly() {
    let tb = Testbed::start(TestbedOptions::default()).await.unwrap();
    let suffix = tb.stub.config().odns_suffix.clone();
    let mut recursives = Vec::new();
    let mut handles = Vec::new();
    for _ in 0..3 {
        let r = TestRecursive::new(
            vec![(suffix.clone(), tb.resolver_addr)],
            Some(tb.upstream_addr),
            Default::default(),
            1,
        );
        let socket = testnet::bind(RECURSIVE_IP).await.unwrap();
        let h = r.clone().spawn(socket).await.unwrap();
        recursives.push((r, h.addr));
        handles.push(h);
    }
    let mut cfg = StubConfig::new(recursives.iter().map(|(_, a)| *a).collect(), suffix);
    cfg.listen_address = "127.0.0.1:0".parse().unwrap();
    cfg.striping = Striping::RoundRobin;
    let stub = Stub::new(cfg);
    stub.bootstrap_identity().await.unwrap();
    for r in &recursives {
        r.0.clear_captures();
    }
    for i in 0..300 {
        let q = DnsMessage::query(i, format!("rr{i}.example").parse().unwrap(), RecordType::A);
        let (_, outcome) = stub.handle_client_query(&q).await;
        assert_eq!(outcome, Outcome::OdnsOk);
    }
    let counts: Vec<usize> = recursives.iter().map(|(r, _)| r.captures().len()).collect();
    assert_eq!(counts, vec![100, 100, 100]);
    drop(handles);
}
