//! Length-prefixed framing: a 4-byte big-endian payload length followed by
//! the JSON encoding of one [`Message`].

use serde_json::Value;

use super::{Message, ProtoError};

/// Largest accepted payload.
pub const MAX_FRAME: usize = 1 << 20;
const HEADER: usize = 4;

pub fn encode(msg: &Message) -> Result<Vec<u8>, ProtoError> {
    msg.validate()?;
    let payload = serde_json::to_vec(msg).map_err(|e| ProtoError::Malformed(e.to_string()))?;
    if payload.len() > MAX_FRAME {
        return Err(ProtoError::Oversize { len: payload.len() });
    }
    let mut out = Vec::with_capacity(HEADER + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Decodes the frame at the start of `buf`.
///
/// Returns `Ok(None)` when `buf` does not yet hold a whole frame; nothing is
/// consumed in that case. Otherwise returns the message and the number of
/// bytes it occupied.
pub fn decode(buf: &[u8]) -> Result<Option<(Message, usize)>, ProtoError> {
    if buf.len() < HEADER {
        return Ok(None);
    }
    let len = u32::from_be_bytes(buf[..HEADER].try_into().expect("4 bytes")) as usize;
    if len > MAX_FRAME {
        return Err(ProtoError::Oversize { len });
    }
    if buf.len() < HEADER + len {
        return Ok(None);
    }
    let msg = parse_payload(&buf[HEADER..HEADER + len])?;
    Ok(Some((msg, HEADER + len)))
}

fn parse_payload(payload: &[u8]) -> Result<Message, ProtoError> {
    let value: Value =
        serde_json::from_slice(payload).map_err(|e| ProtoError::Malformed(e.to_string()))?;
    let tag = value
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| ProtoError::Malformed("missing \"type\" field".into()))?;
    if !Message::TYPES.contains(&tag) {
        return Err(ProtoError::UnknownType(tag.to_owned()));
    }
    let msg: Message =
        serde_json::from_value(value).map_err(|e| ProtoError::Malformed(e.to_string()))?;
    msg.validate()?;
    Ok(msg)
}

/// Accumulates stream bytes and yields complete messages.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn next_message(&mut self) -> Result<Option<Message>, ProtoError> {
        match decode(&self.buf)? {
            Some((msg, used)) => {
                self.buf.drain(..used);
                Ok(Some(msg))
            }
            None => Ok(None),
        }
    }

    /// Bytes received but not yet decoded.
    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proto::PROTOCOL_VERSION;

    #[test]
    fn ping_is_prefix_plus_tagged_object() {
        let bytes = encode(&Message::Ping).unwrap();
        assert_eq!(&bytes[..4], &[0, 0, 0, 15]);
        assert_eq!(&bytes[4..], br#"{"type":"Ping"}"#);
    }

    #[test]
    fn assign_round_trips() {
        let msg = Message::Assign { request_id: 1, images: 40, level: 0, seed: 7 };
        let bytes = encode(&msg).unwrap();
        assert_eq!(decode(&bytes).unwrap(), Some((msg, bytes.len())));
    }

    #[test]
    fn truncated_frame_needs_more_bytes() {
        let mut frame = 100u32.to_be_bytes().to_vec();
        frame.extend(std::iter::repeat_n(b' ', 50));
        assert_eq!(decode(&frame).unwrap(), None);
        assert_eq!(decode(&frame[..3]).unwrap(), None);
        let mut d = FrameDecoder::new();
        d.push(&frame);
        assert_eq!(d.next_message().unwrap(), None);
        assert_eq!(d.buffered(), 54);
    }

    #[test]
    fn typed_errors() {
        let frame = |payload: &[u8]| {
            let mut v = (payload.len() as u32).to_be_bytes().to_vec();
            v.extend_from_slice(payload);
            v
        };
        assert!(matches!(
            decode(&((MAX_FRAME as u32 + 1).to_be_bytes())),
            Err(ProtoError::Oversize { .. })
        ));
        assert!(matches!(decode(&frame(b"{nope")), Err(ProtoError::Malformed(_))));
        assert!(matches!(decode(&frame(b"{}")), Err(ProtoError::Malformed(_))));
        assert!(matches!(
            decode(&frame(br#"{"type":"Shout"}"#)),
            Err(ProtoError::UnknownType(t)) if t == "Shout"
        ));
        assert!(matches!(
            decode(&frame(br#"{"type":"Assign","request_id":1}"#)),
            Err(ProtoError::Malformed(_))
        ));
        let hello = format!(
            r#"{{"type":"Hello","node_id":"x","protocol_version":{}}}"#,
            PROTOCOL_VERSION + 1
        );
        assert!(matches!(
            decode(&frame(hello.as_bytes())),
            Err(ProtoError::UnsupportedVersion { .. })
        ));
        let bad = br#"{"type":"Result","request_id":1,"node_id":"x","images_done":1,"top5_correct":2,"elapsed_ms":0}"#;
        assert!(matches!(decode(&frame(bad)), Err(ProtoError::Invalid(_))));
    }

    #[test]
    fn oversize_message_is_not_encoded() {
        let msg = Message::ProfileReport {
            node_id: "x".into(),
            perf_column: vec![1.0e-300; 100_000],
            acc: vec![1.0e-300; 100_000],
        };
        assert!(matches!(encode(&msg), Err(ProtoError::Oversize { .. })));
    }
}
