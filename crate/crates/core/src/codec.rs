//! MQTT 3.1.1 subset wire codec.
//!
//! Supported: CONNECT, CONNACK, PUBLISH (QoS 0/1), PUBACK, SUBSCRIBE, SUBACK,
//! UNSUBSCRIBE, UNSUBACK, PINGREQ, PINGRESP, DISCONNECT. Decoding is strict:
//! anything this codec would not produce itself is a protocol error, so every
//! accepted byte sequence re-encodes to exactly the same bytes.

use thiserror::Error;

use crate::topic::{TopicError, TopicFilter, TopicName};

/// Largest value representable by the four-byte remaining-length varint.
pub const MAX_REMAINING_LENGTH: usize = 268_435_455;

const PROTOCOL_NAME: &str = "MQTT";
const PROTOCOL_LEVEL: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QoS {
    AtMostOnce = 0,
    AtLeastOnce = 1,
}

impl QoS {
    pub fn from_u8(v: u8) -> Option<QoS> {
        match v {
            0 => Some(QoS::AtMostOnce),
            1 => Some(QoS::AtLeastOnce),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connect {
    pub client_id: String,
    pub keep_alive: u16,
    pub clean_session: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectReturnCode {
    Accepted = 0,
    UnacceptableProtocol = 1,
    IdentifierRejected = 2,
    ServerUnavailable = 3,
    BadCredentials = 4,
    NotAuthorized = 5,
}

impl ConnectReturnCode {
    fn from_u8(v: u8) -> Option<Self> {
        use ConnectReturnCode::*;
        Some(match v {
            0 => Accepted,
            1 => UnacceptableProtocol,
            2 => IdentifierRejected,
            3 => ServerUnavailable,
            4 => BadCredentials,
            5 => NotAuthorized,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnAck {
    pub session_present: bool,
    pub code: ConnectReturnCode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publish {
    pub dup: bool,
    pub qos: QoS,
    pub retain: bool,
    pub topic: TopicName,
    /// Present iff `qos` is `AtLeastOnce`; never zero.
    pub packet_id: Option<u16>,
    pub payload: Vec<u8>,
}

impl Publish {
    pub fn qos0(topic: TopicName, payload: impl Into<Vec<u8>>, retain: bool) -> Self {
        Publish {
            dup: false,
            qos: QoS::AtMostOnce,
            retain,
            topic,
            packet_id: None,
            payload: payload.into(),
        }
    }

    pub fn qos1(topic: TopicName, payload: impl Into<Vec<u8>>, retain: bool, packet_id: u16) -> Self {
        Publish {
            dup: false,
            qos: QoS::AtLeastOnce,
            retain,
            topic,
            packet_id: Some(packet_id),
            payload: payload.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscribe {
    pub packet_id: u16,
    pub filters: Vec<(TopicFilter, QoS)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubAckCode {
    Granted(QoS),
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubAck {
    pub packet_id: u16,
    pub codes: Vec<SubAckCode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unsubscribe {
    pub packet_id: u16,
    pub filters: Vec<TopicFilter>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Connect(Connect),
    ConnAck(ConnAck),
    Publish(Publish),
    PubAck(u16),
    Subscribe(Subscribe),
    SubAck(SubAck),
    Unsubscribe(Unsubscribe),
    UnsubAck(u16),
    PingReq,
    PingResp,
    Disconnect,
}

impl Packet {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Packet::Connect(_) => "CONNECT",
            Packet::ConnAck(_) => "CONNACK",
            Packet::Publish(_) => "PUBLISH",
            Packet::PubAck(_) => "PUBACK",
            Packet::Subscribe(_) => "SUBSCRIBE",
            Packet::SubAck(_) => "SUBACK",
            Packet::Unsubscribe(_) => "UNSUBSCRIBE",
            Packet::UnsubAck(_) => "UNSUBACK",
            Packet::PingReq => "PINGREQ",
            Packet::PingResp => "PINGRESP",
            Packet::Disconnect => "DISCONNECT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("remaining length {0} exceeds the protocol limit")]
    TooLarge(usize),
    #[error("string field of {0} bytes exceeds the 16-bit length prefix")]
    StringTooLong(usize),
    #[error("invalid packet: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("reserved packet type {0}")]
    ReservedType(u8),
    #[error("unsupported packet type {0}")]
    UnsupportedType(u8),
    #[error("invalid fixed-header flags {flags:#06b} for packet type {kind}")]
    InvalidFlags { kind: u8, flags: u8 },
    #[error("QoS {0} is not supported")]
    UnsupportedQoS(u8),
    #[error("remaining-length varint longer than four bytes")]
    VarintOverflow,
    #[error("remaining-length varint is not minimally encoded")]
    VarintNotMinimal,
    #[error("packet of {size} bytes exceeds the {limit}-byte limit")]
    PacketTooLarge { size: usize, limit: usize },
    #[error("packet body ended early")]
    Truncated,
    #[error("{0} trailing bytes after packet body")]
    TrailingBytes(usize),
    #[error("string is not valid UTF-8")]
    InvalidUtf8,
    #[error("invalid topic: {0}")]
    InvalidTopic(#[from] TopicError),
    #[error("packet identifier must be nonzero")]
    ZeroPacketId,
    #[error("unsupported protocol name or level")]
    UnsupportedProtocol,
    #[error("unsupported connect flags {0:#010b}")]
    UnsupportedConnectFlags(u8),
    #[error("invalid CONNACK: {0}")]
    InvalidConnAck(&'static str),
    #[error("invalid SUBACK return code {0:#04x}")]
    InvalidSubAckCode(u8),
    #[error("invalid subscription options byte {0:#04x}")]
    InvalidSubscriptionOptions(u8),
    #[error("subscription list is empty")]
    EmptySubscription,
    #[error("DUP flag set on a QoS 0 publish")]
    DupOnQoS0,
}

/// Appends the remaining-length varint for `len`.
pub fn encode_remaining_length(len: usize, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    if len > MAX_REMAINING_LENGTH {
        return Err(EncodeError::TooLarge(len));
    }
    let mut x = len;
    loop {
        let mut byte = (x % 128) as u8;
        x /= 128;
        if x > 0 {
            byte |= 0x80;
        }
        out.push(byte);
        if x == 0 {
            return Ok(());
        }
    }
}

/// Decodes a remaining-length varint. `Ok(None)` means more bytes are needed.
/// On success returns `(value, bytes_consumed)`.
pub fn decode_remaining_length(buf: &[u8]) -> Result<Option<(usize, usize)>, ProtocolError> {
    let mut value = 0usize;
    let mut multiplier = 1usize;
    for (i, &byte) in buf.iter().enumerate() {
        if i > 0 && byte == 0 {
            return Err(ProtocolError::VarintNotMinimal);
        }
        value += (byte & 0x7f) as usize * multiplier;
        if byte & 0x80 == 0 {
            return Ok(Some((value, i + 1)));
        }
        if i == 3 {
            return Err(ProtocolError::VarintOverflow);
        }
        multiplier *= 128;
    }
    Ok(None)
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), EncodeError> {
    let len = u16::try_from(s.len()).map_err(|_| EncodeError::StringTooLong(s.len()))?;
    put_u16(out, len);
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn nonzero(id: u16) -> Result<u16, EncodeError> {
    if id == 0 {
        Err(EncodeError::Invalid("packet identifier must be nonzero"))
    } else {
        Ok(id)
    }
}

/// Encodes `packet` into a freshly allocated buffer.
pub fn encode_packet(packet: &Packet) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::new();
    encode_packet_into(packet, &mut out)?;
    Ok(out)
}

/// Appends the encoding of `packet` to `out`.
pub fn encode_packet_into(packet: &Packet, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    let mut body = Vec::new();
    let header: u8 = match packet {
        Packet::Connect(c) => {
            put_str(&mut body, PROTOCOL_NAME)?;
            body.push(PROTOCOL_LEVEL);
            body.push(if c.clean_session { 0x02 } else { 0x00 });
            put_u16(&mut body, c.keep_alive);
            put_str(&mut body, &c.client_id)?;
            0x10
        }
        Packet::ConnAck(a) => {
            body.push(a.session_present as u8);
            body.push(a.code as u8);
            0x20
        }
        Packet::Publish(p) => {
            put_str(&mut body, p.topic.as_str())?;
            match (p.qos, p.packet_id) {
                (QoS::AtMostOnce, None) => {
                    if p.dup {
                        return Err(EncodeError::Invalid("DUP flag on a QoS 0 publish"));
                    }
                }
                (QoS::AtLeastOnce, Some(id)) => put_u16(&mut body, nonzero(id)?),
                (QoS::AtMostOnce, Some(_)) => {
                    return Err(EncodeError::Invalid("QoS 0 publish carries a packet identifier"))
                }
                (QoS::AtLeastOnce, None) => {
                    return Err(EncodeError::Invalid("QoS 1 publish lacks a packet identifier"))
                }
            }
            body.extend_from_slice(&p.payload);
            0x30 | (p.dup as u8) << 3 | (p.qos as u8) << 1 | p.retain as u8
        }
        Packet::PubAck(id) => {
            put_u16(&mut body, nonzero(*id)?);
            0x40
        }
        Packet::Subscribe(s) => {
            if s.filters.is_empty() {
                return Err(EncodeError::Invalid("empty subscription list"));
            }
            put_u16(&mut body, nonzero(s.packet_id)?);
            for (filter, qos) in &s.filters {
                put_str(&mut body, filter.as_str())?;
                body.push(*qos as u8);
            }
            0x82
        }
        Packet::SubAck(s) => {
            if s.codes.is_empty() {
                return Err(EncodeError::Invalid("empty SUBACK"));
            }
            put_u16(&mut body, nonzero(s.packet_id)?);
            for code in &s.codes {
                body.push(match code {
                    SubAckCode::Granted(q) => *q as u8,
                    SubAckCode::Failure => 0x80,
                });
            }
            0x90
        }
        Packet::Unsubscribe(u) => {
            if u.filters.is_empty() {
                return Err(EncodeError::Invalid("empty unsubscribe list"));
            }
            put_u16(&mut body, nonzero(u.packet_id)?);
            for filter in &u.filters {
                put_str(&mut body, filter.as_str())?;
            }
            0xA2
        }
        Packet::UnsubAck(id) => {
            put_u16(&mut body, nonzero(*id)?);
            0xB0
        }
        Packet::PingReq => 0xC0,
        Packet::PingResp => 0xD0,
        Packet::Disconnect => 0xE0,
    };
    // Validate before touching `out` so a failed encode leaves it unchanged.
    if body.len() > MAX_REMAINING_LENGTH {
        return Err(EncodeError::TooLarge(body.len()));
    }
    out.push(header);
    encode_remaining_length(body.len(), out)?;
    out.extend_from_slice(&body);
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn u8(&mut self) -> Result<u8, ProtocolError> {
        let (&b, rest) = self.buf.split_first().ok_or(ProtocolError::Truncated)?;
        self.buf = rest;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16, ProtocolError> {
        let bytes = self.take(2)?;
        Ok(u16::from_be_bytes([bytes[0], bytes[1]]))
    }

    fn packet_id(&mut self) -> Result<u16, ProtocolError> {
        match self.u16()? {
            0 => Err(ProtocolError::ZeroPacketId),
            id => Ok(id),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        if self.buf.len() < n {
            return Err(ProtocolError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn string(&mut self) -> Result<String, ProtocolError> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        let s = std::str::from_utf8(bytes).map_err(|_| ProtocolError::InvalidUtf8)?;
        if s.contains('\0') {
            return Err(ProtocolError::InvalidUtf8);
        }
        Ok(s.to_owned())
    }

    fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.buf)
    }

    fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    fn finish(self) -> Result<(), ProtocolError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(ProtocolError::TrailingBytes(self.buf.len()))
        }
    }
}

fn expect_flags(kind: u8, flags: u8, expected: u8) -> Result<(), ProtocolError> {
    if flags == expected {
        Ok(())
    } else {
        Err(ProtocolError::InvalidFlags { kind, flags })
    }
}

/// Attempts to decode one packet from the front of `buf`.
///
/// Returns `Ok(None)` when `buf` holds only a prefix of a packet; nothing is
/// consumed in that case. On success returns the packet and the number of
/// bytes it occupied. `max_packet_size` bounds the whole encoded packet.
pub fn decode_packet(
    buf: &[u8],
    max_packet_size: usize,
) -> Result<Option<(Packet, usize)>, ProtocolError> {
    let Some(&first) = buf.first() else {
        return Ok(None);
    };
    let kind = first >> 4;
    let flags = first & 0x0f;
    // Header checks run before the length is known so garbage is rejected early.
    match kind {
        0 | 15 => return Err(ProtocolError::ReservedType(kind)),
        5..=7 => return Err(ProtocolError::UnsupportedType(kind)),
        3 => {
            let qos = (flags >> 1) & 0x03;
            if qos > 1 {
                return Err(ProtocolError::UnsupportedQoS(qos));
            }
            if qos == 0 && flags & 0x08 != 0 {
                return Err(ProtocolError::DupOnQoS0);
            }
        }
        8 | 10 => expect_flags(kind, flags, 0x02)?,
        _ => expect_flags(kind, flags, 0x00)?,
    }
    let Some((remaining, len_bytes)) = decode_remaining_length(&buf[1..])? else {
        return Ok(None);
    };
    let total = 1 + len_bytes + remaining;
    if total > max_packet_size {
        return Err(ProtocolError::PacketTooLarge {
            size: total,
            limit: max_packet_size,
        });
    }
    if buf.len() < total {
        return Ok(None);
    }
    let mut r = Reader {
        buf: &buf[1 + len_bytes..total],
    };
    let packet = match kind {
        1 => {
            let name = r.string()?;
            let level = r.u8()?;
            if name != PROTOCOL_NAME || level != PROTOCOL_LEVEL {
                return Err(ProtocolError::UnsupportedProtocol);
            }
            let connect_flags = r.u8()?;
            if connect_flags & !0x02 != 0 {
                return Err(ProtocolError::UnsupportedConnectFlags(connect_flags));
            }
            let keep_alive = r.u16()?;
            let client_id = r.string()?;
            r.finish()?;
            Packet::Connect(Connect {
                client_id,
                keep_alive,
                clean_session: connect_flags & 0x02 != 0,
            })
        }
        2 => {
            let ack_flags = r.u8()?;
            if ack_flags > 1 {
                return Err(ProtocolError::InvalidConnAck("reserved acknowledge flags set"));
            }
            let code = ConnectReturnCode::from_u8(r.u8()?)
                .ok_or(ProtocolError::InvalidConnAck("unknown return code"))?;
            r.finish()?;
            Packet::ConnAck(ConnAck {
                session_present: ack_flags == 1,
                code,
            })
        }
        3 => {
            let qos = QoS::from_u8((flags >> 1) & 0x03).expect("checked above");
            let topic = TopicName::new(r.string()?)?;
            let packet_id = match qos {
                QoS::AtMostOnce => None,
                QoS::AtLeastOnce => Some(r.packet_id()?),
            };
            Packet::Publish(Publish {
                dup: flags & 0x08 != 0,
                qos,
                retain: flags & 0x01 != 0,
                topic,
                packet_id,
                payload: r.rest().to_vec(),
            })
        }
        4 => {
            let id = r.packet_id()?;
            r.finish()?;
            Packet::PubAck(id)
        }
        8 => {
            let packet_id = r.packet_id()?;
            let mut filters = Vec::new();
            while !r.is_empty() {
                let filter = TopicFilter::new(r.string()?)?;
                let options = r.u8()?;
                let qos = match options {
                    0 | 1 => QoS::from_u8(options).unwrap(),
                    2 => return Err(ProtocolError::UnsupportedQoS(2)),
                    _ => return Err(ProtocolError::InvalidSubscriptionOptions(options)),
                };
                filters.push((filter, qos));
            }
            if filters.is_empty() {
                return Err(ProtocolError::EmptySubscription);
            }
            Packet::Subscribe(Subscribe { packet_id, filters })
        }
        9 => {
            let packet_id = r.packet_id()?;
            let mut codes = Vec::new();
            while !r.is_empty() {
                codes.push(match r.u8()? {
                    0 => SubAckCode::Granted(QoS::AtMostOnce),
                    1 => SubAckCode::Granted(QoS::AtLeastOnce),
                    0x80 => SubAckCode::Failure,
                    other => return Err(ProtocolError::InvalidSubAckCode(other)),
                });
            }
            if codes.is_empty() {
                return Err(ProtocolError::EmptySubscription);
            }
            Packet::SubAck(SubAck { packet_id, codes })
        }
        10 => {
            let packet_id = r.packet_id()?;
            let mut filters = Vec::new();
            while !r.is_empty() {
                filters.push(TopicFilter::new(r.string()?)?);
            }
            if filters.is_empty() {
                return Err(ProtocolError::EmptySubscription);
            }
            Packet::Unsubscribe(Unsubscribe { packet_id, filters })
        }
        11 => {
            let id = r.packet_id()?;
            r.finish()?;
            Packet::UnsubAck(id)
        }
        12 => {
            r.finish()?;
            Packet::PingReq
        }
        13 => {
            r.finish()?;
            Packet::PingResp
        }
        14 => {
            r.finish()?;
            Packet::Disconnect
        }
        _ => unreachable!("reserved and unsupported types rejected above"),
    };
    Ok(Some((packet, total)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn varint(len: usize) -> Vec<u8> {
        let mut out = Vec::new();
        encode_remaining_length(len, &mut out).unwrap();
        out
    }

    /// Independent varint reader over all 1-2 byte sequences: value is the
    /// little-endian base-128 number, valid iff continuation bits are
    /// well-formed and the top group is nonzero when two bytes are used.
    fn brute_force_two_byte_table() -> Vec<(Vec<u8>, usize)> {
        let mut table = Vec::new();
        for b0 in 0u16..=255 {
            let b0 = b0 as u8;
            if b0 & 0x80 == 0 {
                table.push((vec![b0], b0 as usize));
                continue;
            }
            for b1 in 1u16..=127 {
                let b1 = b1 as u8;
                table.push((vec![b0, b1], (b0 & 0x7f) as usize + 128 * b1 as usize));
            }
        }
        table
    }

    #[test]
    fn remaining_length_examples() {
        assert_eq!(varint(0), vec![0x00]);
        assert_eq!(varint(127), vec![0x7F]);
        assert_eq!(varint(321), vec![0xC1, 0x02]);
        assert_eq!(varint(16_383), vec![0xFF, 0x7F]);
        assert_eq!(varint(16_384), vec![0x80, 0x80, 0x01]);
        assert_eq!(varint(MAX_REMAINING_LENGTH), vec![0xFF, 0xFF, 0xFF, 0x7F]);
        assert_eq!(
            encode_remaining_length(MAX_REMAINING_LENGTH + 1, &mut Vec::new()),
            Err(EncodeError::TooLarge(MAX_REMAINING_LENGTH + 1))
        );
    }

    #[test]
    fn varint_agrees_with_brute_force_table() {
        let table = brute_force_two_byte_table();
        // Every value below 128^2 appears exactly once in the table.
        assert_eq!(table.len(), 16_384);
        for (bytes, value) in &table {
            assert_eq!(&varint(*value), bytes, "value {value}");
            assert_eq!(decode_remaining_length(bytes), Ok(Some((*value, bytes.len()))));
        }
        let oracle_321 = table.iter().find(|(_, v)| *v == 321).unwrap();
        assert_eq!(oracle_321.0, vec![0xC1, 0x02]);
    }

    #[test]
    fn varint_rejects_overlong_and_non_minimal() {
        assert_eq!(
            decode_remaining_length(&[0x80, 0x80, 0x80, 0x80, 0x01]),
            Err(ProtocolError::VarintOverflow)
        );
        assert_eq!(
            decode_remaining_length(&[0xFF, 0xFF, 0xFF, 0xFF]),
            Err(ProtocolError::VarintOverflow)
        );
        assert_eq!(decode_remaining_length(&[0x80, 0x00]), Err(ProtocolError::VarintNotMinimal));
        assert_eq!(decode_remaining_length(&[0x80, 0x80]), Ok(None));
    }

    #[test]
    fn ping_request_bytes() {
        assert_eq!(
            decode_packet(&[0xC0, 0x00], 1024),
            Ok(Some((Packet::PingReq, 2)))
        );
        assert_eq!(encode_packet(&Packet::PingReq).unwrap(), vec![0xC0, 0x00]);
    }

    #[test]
    fn truncated_input_needs_more() {
        assert_eq!(decode_packet(&[], 1024), Ok(None));
        assert_eq!(decode_packet(&[0x30], 1024), Ok(None));
        assert_eq!(decode_packet(&[0x30, 0x05, 0x00], 1024), Ok(None));
    }

    #[test]
    fn malformed_headers() {
        assert_eq!(decode_packet(&[0x00, 0x00], 64), Err(ProtocolError::ReservedType(0)));
        assert_eq!(decode_packet(&[0xF0, 0x00], 64), Err(ProtocolError::ReservedType(15)));
        assert_eq!(decode_packet(&[0x34, 0x00], 64), Err(ProtocolError::UnsupportedQoS(2)));
        assert_eq!(decode_packet(&[0x36, 0x00], 64), Err(ProtocolError::UnsupportedQoS(3)));
        assert_eq!(decode_packet(&[0x38, 0x00], 64), Err(ProtocolError::DupOnQoS0));
        assert_eq!(decode_packet(&[0x50, 0x02, 0, 1], 64), Err(ProtocolError::UnsupportedType(5)));
        assert!(matches!(
            decode_packet(&[0x80, 0x00], 64),
            Err(ProtocolError::InvalidFlags { kind: 8, .. })
        ));
        assert!(matches!(
            decode_packet(&[0xC1, 0x00], 64),
            Err(ProtocolError::InvalidFlags { kind: 12, .. })
        ));
    }

    #[test]
    fn non_utf8_topic_rejected() {
        let bytes = [0x30, 0x04, 0x00, 0x02, 0xFF, 0xFE];
        assert_eq!(decode_packet(&bytes, 64), Err(ProtocolError::InvalidUtf8));
    }

    #[test]
    fn wildcard_topic_in_publish_rejected() {
        let bytes = [0x30, 0x03, 0x00, 0x01, b'#'];
        assert_eq!(
            decode_packet(&bytes, 64),
            Err(ProtocolError::InvalidTopic(TopicError::Wildcard))
        );
    }

    #[test]
    fn size_limit_enforced() {
        let p = Packet::Publish(Publish::qos0(TopicName::new("a").unwrap(), vec![0; 100], false));
        let bytes = encode_packet(&p).unwrap();
        assert!(matches!(
            decode_packet(&bytes, 50),
            Err(ProtocolError::PacketTooLarge { .. })
        ));
        assert_eq!(decode_packet(&bytes, bytes.len()), Ok(Some((p, bytes.len()))));
    }

    #[test]
    fn encode_rejects_inconsistent_publish() {
        let mut p = Publish::qos0(TopicName::new("a").unwrap(), vec![], false);
        p.packet_id = Some(3);
        assert!(encode_packet(&Packet::Publish(p)).is_err());
        let mut p = Publish::qos1(TopicName::new("a").unwrap(), vec![], false, 1);
        p.packet_id = Some(0);
        assert!(encode_packet(&Packet::Publish(p)).is_err());
    }

    #[test]
    fn connect_layout() {
        let c = Packet::Connect(Connect {
            client_id: "ab".into(),
            keep_alive: 60,
            clean_session: true,
        });
        assert_eq!(
            encode_packet(&c).unwrap(),
            vec![0x10, 14, 0, 4, b'M', b'Q', b'T', b'T', 4, 0x02, 0, 60, 0, 2, b'a', b'b']
        );
    }

    #[test]
    fn connect_with_will_rejected() {
        let bytes = [0x10, 12, 0, 4, b'M', b'Q', b'T', b'T', 4, 0x06, 0, 60, 0, 2, b'a', b'b'];
        assert_eq!(
            decode_packet(&bytes, 64),
            Err(ProtocolError::UnsupportedConnectFlags(0x06))
        );
    }

    fn level() -> impl Strategy<Value = String> {
        "[a-z0-9_]{0,6}"
    }

    fn topic_name() -> impl Strategy<Value = TopicName> {
        prop::collection::vec(level(), 1..5)
            .prop_filter_map("non-empty", |l| TopicName::new(l.join("/")).ok())
    }

    fn topic_filter() -> impl Strategy<Value = TopicFilter> {
        (
            prop::collection::vec(prop_oneof![level(), Just("+".to_string())], 1..4),
            any::<bool>(),
        )
            .prop_filter_map("valid", |(mut l, hash)| {
                if hash {
                    l.push("#".into());
                }
                TopicFilter::new(l.join("/")).ok()
            })
    }

    fn qos() -> impl Strategy<Value = QoS> {
        prop_oneof![Just(QoS::AtMostOnce), Just(QoS::AtLeastOnce)]
    }

    fn packet() -> impl Strategy<Value = Packet> {
        let id = 1u16..=u16::MAX;
        prop_oneof![
            ("[ -~]{0,23}", any::<u16>(), any::<bool>()).prop_map(|(client_id, keep_alive, clean_session)| {
                Packet::Connect(Connect { client_id, keep_alive, clean_session })
            }),
            (any::<bool>(), 0u8..=5).prop_map(|(session_present, c)| Packet::ConnAck(ConnAck {
                session_present,
                code: ConnectReturnCode::from_u8(c).unwrap()
            })),
            (topic_name(), prop::collection::vec(any::<u8>(), 0..64), any::<bool>(), any::<bool>(), prop::option::of(id.clone()))
                .prop_map(|(topic, payload, retain, dup, pid)| {
                    Packet::Publish(match pid {
                        None => Publish::qos0(topic, payload, retain),
                        Some(pid) => Publish { dup, ..Publish::qos1(topic, payload, retain, pid) },
                    })
                }),
            id.clone().prop_map(Packet::PubAck),
            (id.clone(), prop::collection::vec((topic_filter(), qos()), 1..4))
                .prop_map(|(packet_id, filters)| Packet::Subscribe(Subscribe { packet_id, filters })),
            (id.clone(), prop::collection::vec(prop_oneof![
                qos().prop_map(SubAckCode::Granted),
                Just(SubAckCode::Failure)
            ], 1..4)).prop_map(|(packet_id, codes)| Packet::SubAck(SubAck { packet_id, codes })),
            (id.clone(), prop::collection::vec(topic_filter(), 1..4))
                .prop_map(|(packet_id, filters)| Packet::Unsubscribe(Unsubscribe { packet_id, filters })),
            id.prop_map(Packet::UnsubAck),
            Just(Packet::PingReq),
            Just(Packet::PingResp),
            Just(Packet::Disconnect),
        ]
    }

    proptest! {
        #[test]
        fn round_trip(p in packet()) {
            let bytes = encode_packet(&p).unwrap();
            let (decoded, used) = decode_packet(&bytes, usize::MAX).unwrap().unwrap();
            prop_assert_eq!(used, bytes.len());
            prop_assert_eq!(&decoded, &p);
            prop_assert_eq!(encode_packet(&decoded).unwrap(), bytes);
        }

        #[test]
        fn every_strict_prefix_needs_more(p in packet()) {
            let bytes = encode_packet(&p).unwrap();
            for cut in 0..bytes.len() {
                prop_assert_eq!(decode_packet(&bytes[..cut], usize::MAX), Ok(None));
            }
        }

        #[test]
        fn varint_minimal_and_invertible(len in 0usize..=MAX_REMAINING_LENGTH) {
            let bytes = varint(len);
            let expected_len = match len {
                0..=127 => 1,
                128..=16_383 => 2,
                16_384..=2_097_151 => 3,
                _ => 4,
            };
            prop_assert_eq!(bytes.len(), expected_len);
            prop_assert_eq!(decode_remaining_length(&bytes), Ok(Some((len, bytes.len()))));
        }

        #[test]
        fn accepted_bytes_reencode_identically(bytes in prop::collection::vec(any::<u8>(), 0..24)) {
            if let Ok(Some((p, used))) = decode_packet(&bytes, usize::MAX) {
                prop_assert_eq!(encode_packet(&p).unwrap(), bytes[..used].to_vec());
            }
        }
    }
}
