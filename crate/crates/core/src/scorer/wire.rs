//! PSRQ/PSRS framing for out-of-process scorers.
//!
//! One request, one response, little-endian throughout:
//!
//! ```text
//! request  = "PSRQ" | version:u32 | height:u32 | width:u32 | channels:u8 | height*width*channels bytes
//! response = "PSRS" | version:u32 | height:u32 | width:u32 | height*width float32
//! ```
//!
//! A 2x1 RGB request (`height = 1`, `width = 2`):
//!
//! ```text
//! 50 53 52 51  01 00 00 00  01 00 00 00  02 00 00 00  03
//! ff 00 00  00 ff 00
//! ```
//!
//! and a response scoring both pixels 0.5:
//!
//! ```text
//! 50 53 52 53  01 00 00 00  01 00 00 00  02 00 00 00
//! 00 00 00 3f  00 00 00 3f
//! ```

use std::io::{ErrorKind, Read, Write};

use crate::error::{Error, Result};

pub const REQUEST_MAGIC: &[u8; 4] = b"PSRQ";
pub const RESPONSE_MAGIC: &[u8; 4] = b"PSRS";
pub const PROTOCOL_VERSION: u32 = 1;

const REQUEST_HEADER_LEN: usize = 17;
const RESPONSE_HEADER_LEN: usize = 16;
/// Refuse to allocate for absurd declared sizes (8192 x 8192).
const MAX_PIXELS: usize = 1 << 26;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScoreRequest {
    pub height: u32,
    pub width: u32,
    pub channels: u8,
    pub pixels: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreResponse {
    pub height: u32,
    pub width: u32,
    pub probs: Vec<f32>,
}

fn protocol(msg: impl Into<String>) -> Error {
    Error::ProtocolError(msg.into())
}

fn check_pixels(height: u32, width: u32) -> Result<usize> {
    let n = height as usize * width as usize;
    if n > MAX_PIXELS {
        return Err(protocol(format!("declared size {height}x{width} too large")));
    }
    Ok(n)
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn check_header(magic: &[u8], expected: &[u8; 4], version: u32) -> Result<()> {
    if magic != expected {
        return Err(protocol(format!(
            "bad magic {:02x?}, expected {:?}",
            magic,
            std::str::from_utf8(expected).unwrap()
        )));
    }
    if version != PROTOCOL_VERSION {
        return Err(protocol(format!("unsupported protocol version {version}")));
    }
    Ok(())
}

impl ScoreRequest {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(REQUEST_HEADER_LEN + self.pixels.len());
        out.extend_from_slice(REQUEST_MAGIC);
        out.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.push(self.channels);
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Parses exactly one request; trailing bytes are an error.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < REQUEST_HEADER_LEN {
            return Err(protocol(format!("request of {} bytes has no complete header", bytes.len())));
        }
        let (header, payload) = bytes.split_at(REQUEST_HEADER_LEN);
        let req = Self::from_header(header)?;
        if payload.len() != req.payload_len() {
            return Err(protocol(format!(
                "request payload is {} bytes, header declares {}",
                payload.len(),
                req.payload_len()
            )));
        }
        Ok(Self {
            pixels: payload.to_vec(),
            ..req
        })
    }

    fn from_header(header: &[u8]) -> Result<Self> {
        check_header(&header[0..4], REQUEST_MAGIC, u32_at(header, 4))?;
        let (height, width, channels) = (u32_at(header, 8), u32_at(header, 12), header[16]);
        check_pixels(height, width)?;
        Ok(Self {
            height,
            width,
            channels,
            pixels: Vec::new(),
        })
    }

    fn payload_len(&self) -> usize {
        self.height as usize * self.width as usize * self.channels as usize
    }

    /// Reads one request. `Ok(None)` on a clean end of stream before any byte.
    pub fn read_from(reader: &mut impl Read) -> Result<Option<Self>> {
        let mut header = [0u8; REQUEST_HEADER_LEN];
        if !read_exact_or_eof(reader, &mut header)? {
            return Ok(None);
        }
        let mut req = Self::from_header(&header)?;
        req.pixels = vec![0; req.payload_len()];
        read_payload(reader, &mut req.pixels)?;
        Ok(Some(req))
    }
}

impl ScoreResponse {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(RESPONSE_HEADER_LEN + 4 * self.probs.len());
        out.extend_from_slice(RESPONSE_MAGIC);
        out.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        for p in &self.probs {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < RESPONSE_HEADER_LEN {
            return Err(protocol(format!("response of {} bytes has no complete header", bytes.len())));
        }
        let (header, payload) = bytes.split_at(RESPONSE_HEADER_LEN);
        let (height, width, n) = Self::parse_header(header)?;
        if payload.len() != 4 * n {
            return Err(protocol(format!(
                "response payload is {} bytes, header declares {} floats",
                payload.len(),
                n
            )));
        }
        Ok(Self {
            height,
            width,
            probs: floats(payload),
        })
    }

    fn parse_header(header: &[u8]) -> Result<(u32, u32, usize)> {
        check_header(&header[0..4], RESPONSE_MAGIC, u32_at(header, 4))?;
        let (height, width) = (u32_at(header, 8), u32_at(header, 12));
        Ok((height, width, check_pixels(height, width)?))
    }

    /// Reads one response. `Ok(None)` on a clean end of stream before any byte.
    pub fn read_from(reader: &mut impl Read) -> Result<Option<Self>> {
        let mut header = [0u8; RESPONSE_HEADER_LEN];
        if !read_exact_or_eof(reader, &mut header)? {
            return Ok(None);
        }
        let (height, width, n) = Self::parse_header(&header)?;
        let mut payload = vec![0u8; 4 * n];
        read_payload(reader, &mut payload)?;
        Ok(Some(Self {
            height,
            width,
            probs: floats(&payload),
        }))
    }

    /// First value outside `[0, 1]` (NaN included), if any.
    pub fn first_out_of_range(&self) -> Option<(usize, f32)> {
        self.probs
            .iter()
            .copied()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(p))
    }
}

fn floats(payload: &[u8]) -> Vec<f32> {
    payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

/// Fills `buf`; `false` if the stream ended before the first byte.
fn read_exact_or_eof(reader: &mut impl Read, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(protocol(format!("stream ended after {filled} header bytes"))),
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(protocol(format!("read failed: {e}"))),
        }
    }
    Ok(true)
}

fn read_payload(reader: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    reader.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => protocol(format!("stream ended inside a {}-byte payload", buf.len())),
        _ => protocol(format!("read failed: {e}")),
    })
}

pub fn write_message(writer: &mut impl Write, bytes: &[u8]) -> std::io::Result<()> {
    writer.write_all(bytes)?;
    writer.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn documented_hex_dumps() {
        let req = ScoreRequest {
            height: 1,
            width: 2,
            channels: 3,
            pixels: vec![0xff, 0, 0, 0, 0xff, 0],
        };
        assert_eq!(
            req.encode(),
            vec![
                0x50, 0x53, 0x52, 0x51, 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 3, 0xff, 0, 0, 0, 0xff, 0
            ]
        );
        let resp = ScoreResponse {
            height: 1,
            width: 2,
            probs: vec![0.5, 0.5],
        };
        assert_eq!(
            resp.encode(),
            vec![
                0x50, 0x53, 0x52, 0x53, 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0x3f, 0, 0, 0, 0x3f
            ]
        );
    }

    #[test]
    fn short_payload_rejected() {
        let mut bytes = ScoreResponse {
            height: 512,
            width: 512,
            probs: vec![],
        }
        .encode();
        bytes.extend(std::iter::repeat(0).take(400));
        assert!(matches!(ScoreResponse::decode(&bytes), Err(Error::ProtocolError(_))));
        assert!(matches!(
            ScoreResponse::read_from(&mut bytes.as_slice()),
            Err(Error::ProtocolError(_))
        ));
    }

    #[test]
    fn wrong_magic_and_version() {
        let mut bytes = ScoreRequest {
            height: 1,
            width: 1,
            channels: 3,
            pixels: vec![1, 2, 3],
        }
        .encode();
        bytes[3] = b'S';
        assert!(ScoreRequest::decode(&bytes).is_err());
        bytes[3] = b'Q';
        bytes[4] = 2;
        assert!(ScoreRequest::decode(&bytes).is_err());
    }

    #[test]
    fn clean_eof_is_none() {
        let empty: &[u8] = &[];
        assert!(ScoreResponse::read_from(&mut &*empty).unwrap().is_none());
        assert!(ScoreRequest::read_from(&mut &*empty).unwrap().is_none());
        let partial: &[u8] = b"PSR";
        assert!(ScoreResponse::read_from(&mut &*partial).is_err());
    }

    #[test]
    fn streamed_messages_back_to_back() {
        let a = ScoreResponse { height: 1, width: 1, probs: vec![0.25] };
        let b = ScoreResponse { height: 1, width: 2, probs: vec![1.0, 0.0] };
        let mut stream = a.encode();
        stream.extend(b.encode());
        let mut r = stream.as_slice();
        assert_eq!(ScoreResponse::read_from(&mut r).unwrap(), Some(a));
        assert_eq!(ScoreResponse::read_from(&mut r).unwrap(), Some(b));
        assert_eq!(ScoreResponse::read_from(&mut r).unwrap(), None);
    }

    #[test]
    fn range_check() {
        let r = ScoreResponse { height: 1, width: 3, probs: vec![0.0, 1.0, 1.5] };
        assert_eq!(r.first_out_of_range(), Some((2, 1.5)));
        let n = ScoreResponse { height: 1, width: 1, probs: vec![f32::NAN] };
        assert!(n.first_out_of_range().is_some());
    }

    fn request_bytes() -> impl Strategy<Value = Vec<u8>> {
        (1u32..=64, 1u32..=64, prop_oneof![Just(1u8), Just(3u8), Just(4u8)]).prop_flat_map(|(h, w, c)| {
            proptest::collection::vec(any::<u8>(), (h * w * c as u32) as usize).prop_map(move |pixels| {
                ScoreRequest { height: h, width: w, channels: c, pixels }.encode()
            })
        })
    }

    fn response_bytes() -> impl Strategy<Value = Vec<u8>> {
        (1u32..=64, 1u32..=64).prop_flat_map(|(h, w)| {
            proptest::collection::vec(any::<u32>(), (h * w) as usize).prop_map(move |bits| {
                ScoreResponse { height: h, width: w, probs: bits.into_iter().map(f32::from_bits).collect() }
                    .encode()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn request_reencodes_bit_exact(bytes in request_bytes()) {
            prop_assert_eq!(ScoreRequest::decode(&bytes).unwrap().encode(), bytes.clone());
            let streamed = ScoreRequest::read_from(&mut bytes.as_slice()).unwrap().unwrap();
            prop_assert_eq!(streamed.encode(), bytes);
        }

        #[test]
        fn response_reencodes_bit_exact(bytes in response_bytes()) {
            prop_assert_eq!(ScoreResponse::decode(&bytes).unwrap().encode(), bytes);
        }
    }
}
