//! Echo observer: a small authoritative server that records what arrives for
//! probe names so a compatibility probe can see what a recursive changed.
//!
//! Names it answers, all under its zone:
//!
//! - `ping.<zone>`: TXT `pong`, a liveness check
//! - `<nonce>.<...>.probe.<zone>`: records the query, answers A 192.0.2.1
//! - `<nonce>.result.<zone>`: TXT `qname=<name as received>;ecs=<0|1>;marker=<0|1>`,
//!   or NXDOMAIN if nothing was recorded for the nonce

use std::collections::HashMap;
use std::io;
use std::sync::{Arc, Mutex};

use odns_core::wire::{DnsMessage, DnsName, Rcode, RecordType, ResourceRecord, OPTION_CLIENT_SUBNET};
use odns_core::OPTION_PROBE_MARKER;
use tokio::net::UdpSocket;

use crate::net::{self, ServerHandle};

pub const PROBE_ANSWER: [u8; 4] = [192, 0, 2, 1];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    /// The question name exactly as it arrived, case preserved.
    pub qname: DnsName,
    pub ecs_present: bool,
    pub marker_present: bool,
}

impl Observation {
    pub fn to_txt(&self) -> String {
        format!(
            "qname={};ecs={};marker={}",
            self.qname,
            u8::from(self.ecs_present),
            u8::from(self.marker_present)
        )
    }

    pub fn from_txt(text: &str) -> Option<Self> {
        let mut qname = None;
        let mut ecs = None;
        let mut marker = None;
        for field in text.split(';') {
            let (k, v) = field.split_once('=')?;
            match k {
                "qname" => qname = v.parse().ok(),
                "ecs" => ecs = Some(v == "1"),
                "marker" => marker = Some(v == "1"),
                _ => {}
            }
        }
        Some(Self {
            qname: qname?,
            ecs_present: ecs?,
            marker_present: marker?,
        })
    }
}

#[derive(Clone)]
pub struct EchoObserver {
    zone: DnsName,
    log: Arc<Mutex<HashMap<Vec<u8>, Observation>>>,
}

impl EchoObserver {
    pub fn new(zone: DnsName) -> Self {
        Self {
            zone,
            log: Arc::default(),
        }
    }

    pub fn observation(&self, nonce: &str) -> Option<Observation> {
        self.log
            .lock()
            .expect("log lock")
            .get(nonce.to_ascii_lowercase().as_bytes())
            .cloned()
    }

    pub fn handle(&self, msg: &DnsMessage) -> DnsMessage {
        let Some(q) = msg.question().filter(|_| !msg.header.qr) else {
            return DnsMessage::response_to(msg, Rcode::FORMERR);
        };
        let Some(rel) = q.name.strip_suffix(&self.zone) else {
            return DnsMessage::response_to(msg, Rcode::REFUSED);
        };
        let lower: Vec<Vec<u8>> = rel.iter().map(|l| l.to_ascii_lowercase()).collect();
        let mut reply = DnsMessage::response_to(msg, Rcode::NOERROR);
        reply.header.aa = true;
        match lower.as_slice() {
            [ping] if ping == b"ping" => {
                reply.answers.push(ResourceRecord::txt(q.name.clone(), 0, b"pong"));
            }
            [nonce, result] if result == b"result" => match self.log.lock().expect("log lock").get(nonce) {
                Some(obs) => reply
                    .answers
                    .push(ResourceRecord::txt(q.name.clone(), 0, obs.to_txt().as_bytes())),
                None => reply.header.rcode = Rcode::NXDOMAIN.0,
            },
            [nonce, .., probe] if probe == b"probe" => {
                let obs = Observation {
                    qname: q.name.clone(),
                    ecs_present: msg.edns_option(OPTION_CLIENT_SUBNET).is_some(),
                    marker_present: msg.edns_option(OPTION_PROBE_MARKER).is_some(),
                };
                self.log.lock().expect("log lock").insert(nonce.clone(), obs);
                if q.qtype == RecordType::A {
                    reply.answers.push(ResourceRecord::a(q.name.clone(), 0, PROBE_ANSWER));
                }
            }
            _ => reply.header.rcode = Rcode::NXDOMAIN.0,
        }
        reply
    }

    pub async fn serve(self, socket: UdpSocket) -> io::Result<()> {
        net::serve_datagrams(Arc::new(socket), move |datagram, _| {
            let observer = self.clone();
            async move {
                let msg = DnsMessage::decode(&datagram).ok()?;
                observer.handle(&msg).encode().ok()
            }
        })
        .await
    }

    pub async fn spawn(self, socket: UdpSocket) -> io::Result<ServerHandle> {
        let addr = socket.local_addr()?;
        Ok(ServerHandle::new(addr, tokio::spawn(self.serve(socket))))
    }
}
