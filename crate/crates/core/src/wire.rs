//! DNS message encoding and decoding.
//!
//! Covers the subset of the wire format the ODNS components exchange: the
//! fixed header, questions, answer/authority/additional records and a single
//! EDNS0 OPT pseudo-record. Names are always written uncompressed; compression
//! pointers are accepted on input.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

/// Longest label, in bytes.
pub const MAX_LABEL_LEN: usize = 63;
/// Longest encoded name, in octets, including length bytes and the root byte.
pub const MAX_WIRE_NAME_LEN: usize = 255;
/// Longest presentation form accepted (labels joined by '.', no trailing dot).
pub const MAX_PRESENTATION_LEN: usize = 252;

const HEADER_LEN: usize = 12;
const MAX_POINTER_HOPS: usize = 127;

/// EDNS0 option code of the client-subnet option.
pub const OPTION_CLIENT_SUBNET: u16 = 8;

/// Default UDP payload size advertised in OPT records we originate.
pub const DEFAULT_UDP_PAYLOAD: u16 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("domain name exceeds label or length limits")]
    OversizeName,
    #[error("malformed message: {0}")]
    MalformedMessage(&'static str),
    #[error("section, rdata or option too large to encode")]
    OversizeField,
}

/// A domain name as a sequence of raw labels, root excluded.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct DnsName {
    labels: Vec<Vec<u8>>,
}

impl DnsName {
    pub fn root() -> Self {
        Self::default()
    }

    /// Builds a name, enforcing the label and total length limits.
    pub fn from_labels<I, L>(labels: I) -> Result<Self, WireError>
    where
        I: IntoIterator<Item = L>,
        L: Into<Vec<u8>>,
    {
        let name = Self::from_labels_unchecked(labels);
        name.validate()?;
        Ok(name)
    }

    /// Builds a name without checking limits; they are checked again when the
    /// name is encoded.
    pub fn from_labels_unchecked<I, L>(labels: I) -> Self
    where
        I: IntoIterator<Item = L>,
        L: Into<Vec<u8>>,
    {
        Self {
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), WireError> {
        if self.labels.iter().any(|l| l.is_empty() || l.len() > MAX_LABEL_LEN) {
            return Err(WireError::OversizeName);
        }
        if self.presentation_len() > MAX_PRESENTATION_LEN || self.wire_len() > MAX_WIRE_NAME_LEN {
            return Err(WireError::OversizeName);
        }
        Ok(())
    }

    pub fn labels(&self) -> &[Vec<u8>] {
        &self.labels
    }

    pub fn is_root(&self) -> bool {
        self.labels.is_empty()
    }

    /// Length of the labels joined by '.', without escapes or trailing dot.
    pub fn presentation_len(&self) -> usize {
        let sum: usize = self.labels.iter().map(Vec::len).sum();
        sum + self.labels.len().saturating_sub(1)
    }

    /// Encoded length in octets, including the terminal zero byte.
    pub fn wire_len(&self) -> usize {
        self.labels.iter().map(|l| l.len() + 1).sum::<usize>() + 1
    }

    pub fn to_lowercase(&self) -> Self {
        Self {
            labels: self.labels.iter().map(|l| l.to_ascii_lowercase()).collect(),
        }
    }

    pub fn eq_ignore_case(&self, other: &Self) -> bool {
        self.labels.len() == other.labels.len()
            && self
                .labels
                .iter()
                .zip(&other.labels)
                .all(|(a, b)| a.eq_ignore_ascii_case(b))
    }

    /// Returns the labels preceding `suffix` if this name ends with it
    /// (ASCII case-insensitive).
    pub fn strip_suffix(&self, suffix: &DnsName) -> Option<&[Vec<u8>]> {
        let n = self.labels.len().checked_sub(suffix.labels.len())?;
        let tail_matches = self.labels[n..]
            .iter()
            .zip(&suffix.labels)
            .all(|(a, b)| a.eq_ignore_ascii_case(b));
        tail_matches.then(|| &self.labels[..n])
    }

    pub fn ends_with(&self, suffix: &DnsName) -> bool {
        self.strip_suffix(suffix).is_some()
    }

    /// Prepends `labels` to `self`, validating the result.
    pub fn prepend<I, L>(&self, labels: I) -> Result<Self, WireError>
    where
        I: IntoIterator<Item = L>,
        L: Into<Vec<u8>>,
    {
        let mut all: Vec<Vec<u8>> = labels.into_iter().map(Into::into).collect();
        all.extend(self.labels.iter().cloned());
        Self::from_labels(all)
    }

    fn write(&self, out: &mut Vec<u8>) -> Result<(), WireError> {
        self.validate()?;
        for label in &self.labels {
            out.push(label.len() as u8);
            out.extend_from_slice(label);
        }
        out.push(0);
        Ok(())
    }

    /// Uncompressed wire encoding.
    pub fn to_wire(&self) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::with_capacity(self.wire_len());
        self.write(&mut out)?;
        Ok(out)
    }
}

impl fmt::Display for DnsName {
    /// Presentation form; '.', '\\' and non-printable bytes are escaped.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.labels.is_empty() {
            return f.write_str(".");
        }
        for (i, label) in self.labels.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            for &b in label {
                match b {
                    b'.' | b'\\' => write!(f, "\\{}", b as char)?,
                    0x21..=0x7e => write!(f, "{}", b as char)?,
                    _ => write!(f, "\\{:03}", b)?,
                }
            }
        }
        Ok(())
    }
}

impl fmt::Debug for DnsName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DnsName({self})")
    }
}

impl FromStr for DnsName {
    type Err = WireError;

    /// Parses a presentation-form name. A single trailing dot is allowed;
    /// `\X` and `\DDD` escapes are understood.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "." || s.is_empty() {
            return Ok(Self::root());
        }
        let s = s.strip_suffix('.').unwrap_or(s);
        let bytes = s.as_bytes();
        let mut labels = Vec::new();
        let mut cur = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'.' => {
                    if cur.is_empty() {
                        return Err(WireError::OversizeName);
                    }
                    labels.push(core::mem::take(&mut cur));
                    i += 1;
                }
                b'\\' => {
                    let rest = &bytes[i + 1..];
                    if rest.len() >= 3 && rest[..3].iter().all(u8::is_ascii_digit) {
                        let v = rest[..3].iter().fold(0u32, |acc, d| acc * 10 + u32::from(d - b'0'));
                        let v = u8::try_from(v).map_err(|_| WireError::OversizeName)?;
                        cur.push(v);
                        i += 4;
                    } else if let Some(&c) = rest.first() {
                        cur.push(c);
                        i += 2;
                    } else {
                        return Err(WireError::OversizeName);
                    }
                }
                c => {
                    cur.push(c);
                    i += 1;
                }
            }
        }
        if cur.is_empty() {
            return Err(WireError::OversizeName);
        }
        labels.push(cur);
        Self::from_labels(labels)
    }
}

macro_rules! u16_newtype {
    ($(#[$m:meta])* $name:ident { $($(#[$cm:meta])* $c:ident = $v:expr),* $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u16);
        impl $name {
            $($(#[$cm])* pub const $c: $name = $name($v);)*
        }
        impl From<u16> for $name {
            fn from(v: u16) -> Self { Self(v) }
        }
        impl From<$name> for u16 {
            fn from(v: $name) -> u16 { v.0 }
        }
    };
}

u16_newtype!(
    /// Resource record type.
    RecordType {
        A = 1,
        NS = 2,
        CNAME = 5,
        SOA = 6,
        PTR = 12,
        MX = 15,
        TXT = 16,
        AAAA = 28,
        OPT = 41,
    }
);

u16_newtype!(
    RecordClass {
        IN = 1,
        CH = 3,
        ANY = 255,
    }
);

/// Response code (the 4-bit header field).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rcode(pub u8);

impl Rcode {
    pub const NOERROR: Rcode = Rcode(0);
    pub const FORMERR: Rcode = Rcode(1);
    pub const SERVFAIL: Rcode = Rcode(2);
    pub const NXDOMAIN: Rcode = Rcode(3);
    pub const NOTIMP: Rcode = Rcode(4);
    pub const REFUSED: Rcode = Rcode(5);
}

impl fmt::Display for Rcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Rcode::NOERROR => f.write_str("NOERROR"),
            Rcode::FORMERR => f.write_str("FORMERR"),
            Rcode::SERVFAIL => f.write_str("SERVFAIL"),
            Rcode::NXDOMAIN => f.write_str("NXDOMAIN"),
            Rcode::NOTIMP => f.write_str("NOTIMP"),
            Rcode::REFUSED => f.write_str("REFUSED"),
            Rcode(other) => write!(f, "RCODE{other}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Header {
    pub id: u16,
    pub qr: bool,
    pub opcode: u8,
    pub aa: bool,
    pub tc: bool,
    pub rd: bool,
    pub ra: bool,
    pub ad: bool,
    pub cd: bool,
    pub rcode: u8,
}

impl Header {
    fn flags(&self) -> u16 {
        (u16::from(self.qr) << 15)
            | (u16::from(self.opcode & 0x0f) << 11)
            | (u16::from(self.aa) << 10)
            | (u16::from(self.tc) << 9)
            | (u16::from(self.rd) << 8)
            | (u16::from(self.ra) << 7)
            | (u16::from(self.ad) << 5)
            | (u16::from(self.cd) << 4)
            | u16::from(self.rcode & 0x0f)
    }

    fn from_parts(id: u16, flags: u16) -> Self {
        Self {
            id,
            qr: flags & 0x8000 != 0,
            opcode: ((flags >> 11) & 0x0f) as u8,
            aa: flags & 0x0400 != 0,
            tc: flags & 0x0200 != 0,
            rd: flags & 0x0100 != 0,
            ra: flags & 0x0080 != 0,
            ad: flags & 0x0020 != 0,
            cd: flags & 0x0010 != 0,
            rcode: (flags & 0x0f) as u8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Question {
    pub name: DnsName,
    pub qtype: RecordType,
    pub qclass: RecordClass,
}

impl Question {
    pub fn new(name: DnsName, qtype: RecordType) -> Self {
        Self {
            name,
            qtype,
            qclass: RecordClass::IN,
        }
    }
}

/// A resource record with opaque rdata. Names embedded in the rdata of
/// well-known types are stored uncompressed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ResourceRecord {
    pub name: DnsName,
    pub rtype: RecordType,
    pub rclass: RecordClass,
    pub ttl: u32,
    pub rdata: Vec<u8>,
}

impl ResourceRecord {
    pub fn a(name: DnsName, ttl: u32, addr: [u8; 4]) -> Self {
        Self {
            name,
            rtype: RecordType::A,
            rclass: RecordClass::IN,
            ttl,
            rdata: addr.to_vec(),
        }
    }

    pub fn aaaa(name: DnsName, ttl: u32, addr: [u8; 16]) -> Self {
        Self {
            name,
            rtype: RecordType::AAAA,
            rclass: RecordClass::IN,
            ttl,
            rdata: addr.to_vec(),
        }
    }

    pub fn cname(name: DnsName, ttl: u32, target: &DnsName) -> Result<Self, WireError> {
        Ok(Self {
            name,
            rtype: RecordType::CNAME,
            rclass: RecordClass::IN,
            ttl,
            rdata: target.to_wire()?,
        })
    }

    /// Single-string TXT record; `text` is truncated to 255 bytes.
    pub fn txt(name: DnsName, ttl: u32, text: &[u8]) -> Self {
        let text = &text[..text.len().min(255)];
        let mut rdata = Vec::with_capacity(text.len() + 1);
        rdata.push(text.len() as u8);
        rdata.extend_from_slice(text);
        Self {
            name,
            rtype: RecordType::TXT,
            rclass: RecordClass::IN,
            ttl,
            rdata,
        }
    }

    pub(crate) fn write(&self, out: &mut Vec<u8>) -> Result<(), WireError> {
        self.name.write(out)?;
        put_u16(out, self.rtype.0);
        put_u16(out, self.rclass.0);
        out.extend_from_slice(&self.ttl.to_be_bytes());
        let len = u16::try_from(self.rdata.len()).map_err(|_| WireError::OversizeField)?;
        put_u16(out, len);
        out.extend_from_slice(&self.rdata);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EdnsOption {
    pub code: u16,
    pub payload: Vec<u8>,
}

impl EdnsOption {
    pub fn new(code: u16, payload: impl Into<Vec<u8>>) -> Self {
        Self {
            code,
            payload: payload.into(),
        }
    }
}

/// The OPT pseudo-record. Its TTL field is split into extended rcode,
/// version and flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edns {
    pub udp_payload_size: u16,
    pub extended_rcode: u8,
    pub version: u8,
    pub flags: u16,
    pub options: Vec<EdnsOption>,
}

impl Default for Edns {
    fn default() -> Self {
        Self {
            udp_payload_size: DEFAULT_UDP_PAYLOAD,
            extended_rcode: 0,
            version: 0,
            flags: 0,
            options: Vec::new(),
        }
    }
}

impl Edns {
    /// The 32-bit value the OPT record carries in its TTL field.
    pub fn ttl_field(&self) -> u32 {
        (u32::from(self.extended_rcode) << 24) | (u32::from(self.version) << 16) | u32::from(self.flags)
    }

    pub fn option(&self, code: u16) -> Option<&EdnsOption> {
        self.options.iter().find(|o| o.code == code)
    }

    fn write(&self, out: &mut Vec<u8>) -> Result<(), WireError> {
        out.push(0);
        put_u16(out, RecordType::OPT.0);
        put_u16(out, self.udp_payload_size);
        out.extend_from_slice(&self.ttl_field().to_be_bytes());
        let len_at = out.len();
        put_u16(out, 0);
        for opt in &self.options {
            put_u16(out, opt.code);
            let len = u16::try_from(opt.payload.len()).map_err(|_| WireError::OversizeField)?;
            put_u16(out, len);
            out.extend_from_slice(&opt.payload);
        }
        let rdlen = u16::try_from(out.len() - len_at - 2).map_err(|_| WireError::OversizeField)?;
        out[len_at..len_at + 2].copy_from_slice(&rdlen.to_be_bytes());
        Ok(())
    }
}

/// EDNS0 client-subnet option contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientSubnet {
    pub family: u16,
    pub source_prefix: u8,
    pub scope_prefix: u8,
    pub address: Vec<u8>,
}

impl ClientSubnet {
    /// The "do not attach a subnet" marker: family 0, prefix 0, no address.
    pub fn zero() -> Self {
        Self {
            family: 0,
            source_prefix: 0,
            scope_prefix: 0,
            address: Vec::new(),
        }
    }

    pub fn to_option(&self) -> EdnsOption {
        let mut payload = Vec::with_capacity(4 + self.address.len());
        put_u16(&mut payload, self.family);
        payload.push(self.source_prefix);
        payload.push(self.scope_prefix);
        payload.extend_from_slice(&self.address);
        EdnsOption::new(OPTION_CLIENT_SUBNET, payload)
    }

    pub fn from_option(opt: &EdnsOption) -> Result<Self, WireError> {
        if opt.code != OPTION_CLIENT_SUBNET || opt.payload.len() < 4 {
            return Err(WireError::MalformedMessage("client subnet option"));
        }
        let p = &opt.payload;
        let subnet = Self {
            family: u16::from_be_bytes([p[0], p[1]]),
            source_prefix: p[2],
            scope_prefix: p[3],
            address: p[4..].to_vec(),
        };
        if subnet.address.len() != usize::from(subnet.source_prefix).div_ceil(8) {
            return Err(WireError::MalformedMessage("client subnet address length"));
        }
        Ok(subnet)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DnsMessage {
    pub header: Header,
    pub questions: Vec<Question>,
    pub answers: Vec<ResourceRecord>,
    pub authorities: Vec<ResourceRecord>,
    /// Additional records other than OPT.
    pub additionals: Vec<ResourceRecord>,
    pub edns: Option<Edns>,
}

impl DnsMessage {
    /// A recursion-desired query with one question.
    pub fn query(id: u16, name: DnsName, qtype: RecordType) -> Self {
        Self {
            header: Header {
                id,
                rd: true,
                ..Header::default()
            },
            questions: alloc::vec![Question::new(name, qtype)],
            ..Self::default()
        }
    }

    /// An empty response to `query`: same id, opcode, rd and question.
    pub fn response_to(query: &DnsMessage, rcode: Rcode) -> Self {
        Self {
            header: Header {
                id: query.header.id,
                qr: true,
                opcode: query.header.opcode,
                rd: query.header.rd,
                ra: true,
                rcode: rcode.0,
                ..Header::default()
            },
            questions: query.questions.clone(),
            ..Self::default()
        }
    }

    /// The single question, if the message carries exactly one.
    pub fn question(&self) -> Option<&Question> {
        match self.questions.as_slice() {
            [q] => Some(q),
            _ => None,
        }
    }

    pub fn rcode(&self) -> Rcode {
        Rcode(self.header.rcode)
    }

    pub fn edns_option(&self, code: u16) -> Option<&EdnsOption> {
        self.edns.as_ref()?.option(code)
    }

    /// Adds `opt` to the OPT record, creating it if needed. An existing
    /// option with the same code is replaced.
    pub fn set_edns_option(&mut self, opt: EdnsOption) {
        let edns = self.edns.get_or_insert_with(Edns::default);
        edns.options.retain(|o| o.code != opt.code);
        edns.options.push(opt);
    }

    /// Consuming form of [`DnsMessage::set_edns_option`].
    pub fn with_edns_option(mut self, opt: EdnsOption) -> Self {
        self.set_edns_option(opt);
        self
    }

    /// Removes every option with `code`; returns whether any was present.
    pub fn remove_edns_option(&mut self, code: u16) -> bool {
        match self.edns.as_mut() {
            Some(edns) => {
                let before = edns.options.len();
                edns.options.retain(|o| o.code != code);
                edns.options.len() != before
            }
            None => false,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        encode_message(self)
    }

    pub fn decode(wire: &[u8]) -> Result<Self, WireError> {
        decode_message(wire)
    }
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn count(n: usize) -> Result<u16, WireError> {
    u16::try_from(n).map_err(|_| WireError::OversizeField)
}

pub fn encode_message(msg: &DnsMessage) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(512);
    put_u16(&mut out, msg.header.id);
    put_u16(&mut out, msg.header.flags());
    put_u16(&mut out, count(msg.questions.len())?);
    put_u16(&mut out, count(msg.answers.len())?);
    put_u16(&mut out, count(msg.authorities.len())?);
    put_u16(
        &mut out,
        count(msg.additionals.len() + usize::from(msg.edns.is_some()))?,
    );
    for q in &msg.questions {
        q.name.write(&mut out)?;
        put_u16(&mut out, q.qtype.0);
        put_u16(&mut out, q.qclass.0);
    }
    for rr in msg.answers.iter().chain(&msg.authorities).chain(&msg.additionals) {
        rr.write(&mut out)?;
    }
    if let Some(edns) = &msg.edns {
        edns.write(&mut out)?;
    }
    Ok(out)
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn at(buf: &'a [u8], pos: usize) -> Self {
        Self { buf, pos }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn bytes(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(WireError::MalformedMessage("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u16(&mut self) -> Result<u16, WireError> {
        let b = self.bytes(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, WireError> {
        let b = self.bytes(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Reads a possibly compressed name. Pointers must point backwards.
    pub(crate) fn name(&mut self) -> Result<DnsName, WireError> {
        let mut labels: Vec<Vec<u8>> = Vec::new();
        let mut pos = self.pos;
        let mut resume = None;
        let mut hops = 0;
        let mut wire_len = 1;
        loop {
            let len = *self.buf.get(pos).ok_or(WireError::MalformedMessage("truncated name"))?;
            match len & 0xc0 {
                0x00 if len == 0 => {
                    pos += 1;
                    break;
                }
                0x00 => {
                    let len = usize::from(len);
                    let label = self
                        .buf
                        .get(pos + 1..pos + 1 + len)
                        .ok_or(WireError::MalformedMessage("label overrun"))?;
                    wire_len += len + 1;
                    if wire_len > MAX_WIRE_NAME_LEN {
                        return Err(WireError::MalformedMessage("name too long"));
                    }
                    labels.push(label.to_vec());
                    pos += 1 + len;
                }
                0xc0 => {
                    let lo = *self
                        .buf
                        .get(pos + 1)
                        .ok_or(WireError::MalformedMessage("truncated pointer"))?;
                    let target = (usize::from(len & 0x3f) << 8) | usize::from(lo);
                    if target >= pos {
                        return Err(WireError::MalformedMessage("forward compression pointer"));
                    }
                    hops += 1;
                    if hops > MAX_POINTER_HOPS {
                        return Err(WireError::MalformedMessage("compression loop"));
                    }
                    resume.get_or_insert(pos + 2);
                    pos = target;
                }
                _ => return Err(WireError::MalformedMessage("bad label type")),
            }
        }
        self.pos = resume.unwrap_or(pos);
        Ok(DnsName::from_labels_unchecked(labels))
    }

    fn record(&mut self) -> Result<RawRecord, WireError> {
        let name = self.name()?;
        let rtype = RecordType(self.u16()?);
        let rclass = self.u16()?;
        let ttl = self.u32()?;
        let rdlen = usize::from(self.u16()?);
        let start = self.pos;
        let raw = self.bytes(rdlen)?;
        let rdata = match rtype {
            RecordType::CNAME | RecordType::NS | RecordType::PTR => {
                let mut r = Reader::at(self.buf, start);
                let target = r.name()?;
                expect_end(&r, start + rdlen)?;
                target.to_wire()?
            }
            RecordType::MX => {
                let mut r = Reader::at(self.buf, start);
                let pref = r.u16()?;
                let target = r.name()?;
                expect_end(&r, start + rdlen)?;
                let mut v = pref.to_be_bytes().to_vec();
                v.extend(target.to_wire()?);
                v
            }
            RecordType::SOA => {
                let mut r = Reader::at(self.buf, start);
                let mname = r.name()?;
                let rname = r.name()?;
                let fixed = r.bytes(20)?;
                expect_end(&r, start + rdlen)?;
                let mut v = mname.to_wire()?;
                v.extend(rname.to_wire()?);
                v.extend_from_slice(fixed);
                v
            }
            _ => raw.to_vec(),
        };
        Ok(RawRecord {
            name,
            rtype,
            rclass,
            ttl,
            rdata,
        })
    }
}

fn expect_end(r: &Reader<'_>, end: usize) -> Result<(), WireError> {
    if r.pos == end {
        Ok(())
    } else {
        Err(WireError::MalformedMessage("rdata length mismatch"))
    }
}

struct RawRecord {
    name: DnsName,
    rtype: RecordType,
    rclass: u16,
    ttl: u32,
    rdata: Vec<u8>,
}

impl RawRecord {
    fn into_record(self) -> ResourceRecord {
        ResourceRecord {
            name: self.name,
            rtype: self.rtype,
            rclass: RecordClass(self.rclass),
            ttl: self.ttl,
            rdata: self.rdata,
        }
    }

    fn into_edns(self) -> Result<Edns, WireError> {
        if !self.name.is_root() {
            return Err(WireError::MalformedMessage("OPT owner is not root"));
        }
        let mut r = Reader::new(&self.rdata);
        let mut options = Vec::new();
        while r.remaining() > 0 {
            let code = r.u16()?;
            let len = usize::from(r.u16()?);
            let payload = r
                .bytes(len)
                .map_err(|_| WireError::MalformedMessage("option overrun"))?;
            options.push(EdnsOption::new(code, payload));
        }
        Ok(Edns {
            udp_payload_size: self.rclass,
            extended_rcode: (self.ttl >> 24) as u8,
            version: (self.ttl >> 16) as u8,
            flags: self.ttl as u16,
            options,
        })
    }
}

pub fn decode_message(wire: &[u8]) -> Result<DnsMessage, WireError> {
    if wire.len() < HEADER_LEN {
        return Err(WireError::MalformedMessage("short header"));
    }
    let mut r = Reader::new(wire);
    let id = r.u16()?;
    let flags = r.u16()?;
    let qd = r.u16()?;
    let an = r.u16()?;
    let ns = r.u16()?;
    let ar = r.u16()?;

    let mut msg = DnsMessage {
        header: Header::from_parts(id, flags),
        ..DnsMessage::default()
    };
    for _ in 0..qd {
        let name = r.name()?;
        let qtype = RecordType(r.u16()?);
        let qclass = RecordClass(r.u16()?);
        msg.questions.push(Question { name, qtype, qclass });
    }
    for _ in 0..an {
        msg.answers.push(r.record()?.into_record());
    }
    for _ in 0..ns {
        msg.authorities.push(r.record()?.into_record());
    }
    for _ in 0..ar {
        let rec = r.record()?;
        if rec.rtype == RecordType::OPT {
            if msg.edns.is_some() {
                return Err(WireError::MalformedMessage("multiple OPT records"));
            }
            msg.edns = Some(rec.into_edns()?);
        } else {
            msg.additionals.push(rec.into_record());
        }
    }
    Ok(msg)
}

/// Reads one uncompressed record from `buf`, returning it and the bytes used.
pub(crate) fn read_record(buf: &[u8]) -> Result<(ResourceRecord, usize), WireError> {
    let mut r = Reader::new(buf);
    let rec = r.record()?;
    if rec.rtype == RecordType::OPT {
        return Err(WireError::MalformedMessage("unexpected OPT"));
    }
    Ok((rec.into_record(), r.pos))
}

/// Lowercased presentation form used as a plaintext query and cache key.
pub fn canonical_domain(name: &DnsName) -> String {
    use alloc::string::ToString;
    name.to_lowercase().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn name(s: &str) -> DnsName {
        s.parse().unwrap()
    }

    // Reference vectors produced by an independent DNS codec (dnspython).
    const QUERY_WWW_FOO: &str = "1234010000010000000000000377777703666f6f03636f6d0000010001";
    const RESPONSE_EXAMPLE: &str = "beef81800001000200000001076578616d706c6503636f6d0000010001c00c000100010000012c00045db8d82203777777c00c000500010000003c0002c00c0000292000000000000000";
    const QUERY_ECS: &str =
        "beef01000001000000000001076578616d706c6503636f6d000001000100002904d000000000000b0008000700011800c63364";

    #[test]
    fn encodes_like_reference_codec() {
        let msg = DnsMessage::query(0x1234, name("www.foo.com"), RecordType::A);
        let wire = encode_message(&msg).unwrap();
        assert_eq!(hex::encode(&wire), QUERY_WWW_FOO);
        assert_eq!(
            &wire[12..25],
            &[3, b'w', b'w', b'w', 3, b'f', b'o', b'o', 3, b'c', b'o', b'm', 0]
        );
        assert_eq!(&wire[6..8], &[0, 0]);
    }

    #[test]
    fn decodes_compressed_reference_response() {
        let wire = hex::decode(RESPONSE_EXAMPLE).unwrap();
        let msg = decode_message(&wire).unwrap();
        assert_eq!(msg.header.id, 0xbeef);
        assert!(msg.header.qr && msg.header.rd && msg.header.ra);
        assert_eq!(msg.rcode(), Rcode::NOERROR);
        assert_eq!(msg.question().unwrap().name, name("example.com"));
        assert_eq!(
            msg.answers,
            vec![
                ResourceRecord::a(name("example.com"), 300, [93, 184, 216, 34]),
                ResourceRecord::cname(name("www.example.com"), 60, &name("example.com")).unwrap(),
            ]
        );
        let edns = msg.edns.as_ref().unwrap();
        assert_eq!(edns.udp_payload_size, 8192);
        assert!(edns.options.is_empty());
        // re-encoding never compresses, and parses back to the same structure
        let again = encode_message(&msg).unwrap();
        assert!(again.len() > wire.len());
        assert_eq!(decode_message(&again).unwrap(), msg);
    }

    #[test]
    fn parses_reference_client_subnet() {
        let msg = decode_message(&hex::decode(QUERY_ECS).unwrap()).unwrap();
        let ecs = ClientSubnet::from_option(msg.edns_option(OPTION_CLIENT_SUBNET).unwrap()).unwrap();
        assert_eq!(ecs.family, 1);
        assert_eq!(ecs.source_prefix, 24);
        assert_eq!(ecs.scope_prefix, 0);
        assert_eq!(ecs.address, vec![198, 51, 100]);
        assert_eq!(hex::encode(encode_message(&msg).unwrap()), QUERY_ECS);
    }

    #[test]
    fn empty_answer_count_is_zero() {
        let msg = DnsMessage::response_to(&DnsMessage::query(7, name("a.b"), RecordType::A), Rcode::NXDOMAIN);
        let wire = encode_message(&msg).unwrap();
        assert_eq!(&wire[6..8], &[0, 0]);
    }

    #[test]
    fn rejects_64_byte_label() {
        let long = DnsName::from_labels_unchecked([vec![b'a'; 64], b"com".to_vec()]);
        let msg = DnsMessage::query(1, long, RecordType::A);
        assert_eq!(encode_message(&msg), Err(WireError::OversizeName));
        assert_eq!(DnsName::from_labels([vec![b'a'; 64]]), Err(WireError::OversizeName));
        assert!(DnsName::from_labels([vec![b'a'; 63]]).is_ok());
    }

    #[test]
    fn presentation_limit_is_252() {
        // 4 labels of 63 minus trailing bytes: 63*3 + 3 dots + 60 = 252
        let ok = DnsName::from_labels([vec![b'a'; 63], vec![b'b'; 63], vec![b'c'; 63], vec![b'd'; 60]]);
        assert_eq!(ok.as_ref().unwrap().presentation_len(), 252);
        assert_eq!(ok.unwrap().wire_len(), 254);
        let too_long = DnsName::from_labels([vec![b'a'; 63], vec![b'b'; 63], vec![b'c'; 63], vec![b'd'; 61]]);
        assert_eq!(too_long, Err(WireError::OversizeName));
    }

    #[test]
    fn short_header_is_malformed() {
        assert!(matches!(
            decode_message(&[0u8; 11]),
            Err(WireError::MalformedMessage(_))
        ));
    }

    #[test]
    fn bad_pointers_are_malformed() {
        let mut wire = hex::decode(QUERY_WWW_FOO).unwrap();
        // question name replaced by a pointer to itself
        wire.truncate(12);
        wire.extend_from_slice(&[0xc0, 12, 0, 1, 0, 1]);
        assert!(decode_message(&wire).is_err());
        // pointer past the end
        let mut wire = hex::decode(QUERY_WWW_FOO).unwrap();
        wire.truncate(12);
        wire.extend_from_slice(&[0xc0, 0xff, 0, 1, 0, 1]);
        assert!(decode_message(&wire).is_err());
        // label overrun
        let mut wire = hex::decode(QUERY_WWW_FOO).unwrap();
        wire.truncate(14);
        wire[12] = 40;
        assert!(decode_message(&wire).is_err());
    }

    #[test]
    fn truncated_answer_is_malformed() {
        let wire = hex::decode(RESPONSE_EXAMPLE).unwrap();
        for cut in 12..wire.len() {
            assert!(decode_message(&wire[..cut]).is_err(), "cut at {cut}");
        }
    }

    #[test]
    fn set_option_round_trips_and_replaces() {
        let mut msg = DnsMessage::query(9, name("x.test"), RecordType::A);
        msg.set_edns_option(EdnsOption::new(65001, b"first".to_vec()));
        msg.set_edns_option(EdnsOption::new(65001, b"second".to_vec()));
        let back = decode_message(&encode_message(&msg).unwrap()).unwrap();
        let edns = back.edns.unwrap();
        assert_eq!(edns.options.len(), 1);
        assert_eq!(edns.option(65001).unwrap().payload, b"second");
    }

    #[test]
    fn zero_client_subnet_layout() {
        let msg = DnsMessage::query(9, name("x.test"), RecordType::A)
            .with_edns_option(EdnsOption::new(OPTION_CLIENT_SUBNET, vec![0, 0, 0, 0]));
        let back = decode_message(&encode_message(&msg).unwrap()).unwrap();
        let ecs = ClientSubnet::from_option(back.edns_option(OPTION_CLIENT_SUBNET).unwrap()).unwrap();
        assert_eq!(ecs, ClientSubnet::zero());
        assert_eq!(ClientSubnet::zero().to_option().payload, vec![0, 0, 0, 0]);
    }

    #[test]
    fn multiple_opt_records_rejected() {
        let msg = DnsMessage::query(1, name("a"), RecordType::A).with_edns_option(EdnsOption::new(1, vec![]));
        let mut wire = encode_message(&msg).unwrap();
        let opt = wire[wire.len() - 15..].to_vec();
        wire.extend_from_slice(&opt);
        wire[11] = 2;
        assert_eq!(
            decode_message(&wire),
            Err(WireError::MalformedMessage("multiple OPT records"))
        );
    }

    #[test]
    fn presentation_escapes_round_trip() {
        let n = DnsName::from_labels([b"a.b".to_vec(), vec![0, b'\\', 200], b"Com".to_vec()]).unwrap();
        let text = alloc::format!("{n}");
        assert_eq!(text, "a\\.b.\\000\\\\\\200.Com");
        assert_eq!(text.parse::<DnsName>().unwrap(), n);
        assert_eq!(canonical_domain(&n), "a\\.b.\\000\\\\\\200.com");
    }

    #[test]
    fn suffix_matching_ignores_case() {
        let n = name("AbC.odns-test.EXAMPLE");
        assert_eq!(n.strip_suffix(&name("odns-test.example")).unwrap(), &[b"AbC".to_vec()]);
        assert!(!name("www.foo.com").ends_with(&name("odns-test.example")));
        assert!(!name("example").ends_with(&name("odns-test.example")));
    }
}
