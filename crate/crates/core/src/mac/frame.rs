//! MAC frames and their on-air sizes.
//!
//! Control frames carry a fixed 802.11 style header (frame control, duration,
//! receiver and transmitter address) followed by the duplex, work and MCS mode
//! fields, zero padded to the frame's total size. DATA frames carry the same
//! fields inside a fixed-size MAC header followed by the payload.

use serde::{Deserialize, Serialize};

use super::timing::MacTiming;
use crate::des::SimTime;
use crate::error::{Error, Result};
use crate::radio::McsTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FrameKind {
    Rts,
    Cts,
    Data,
    Ack,
}

impl FrameKind {
    pub fn is_control(self) -> bool {
        !matches!(self, FrameKind::Data)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Rts => "RTS",
            FrameKind::Cts => "CTS",
            FrameKind::Data => "DATA",
            FrameKind::Ack => "ACK",
        }
    }

    fn subtype_bits(self) -> (u8, u8) {
        // (type, subtype) as in 802.11 frame control
        match self {
            FrameKind::Rts => (0b01, 0b1011),
            FrameKind::Cts => (0b01, 0b1100),
            FrameKind::Ack => (0b01, 0b1101),
            FrameKind::Data => (0b10, 0b0000),
        }
    }

    fn from_type_bits(ty: u8, sub: u8) -> Option<FrameKind> {
        [FrameKind::Rts, FrameKind::Cts, FrameKind::Ack, FrameKind::Data]
            .into_iter()
            .find(|k| k.subtype_bits() == (ty, sub))
    }
}

/// Duplex capability advertised by the sender: `0` half duplex, `1` full duplex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Duplex {
    Half = 0,
    Full = 1,
}

/// Work-mode values. RTS frames use one bit, CTS frames two.
pub mod work {
    /// RTS from a primary transmitter; the receiver picks the mode.
    pub const RTS_PRIMARY: u8 = 0;
    /// RTS from a secondary transmitter; the receiver works in HD receive mode.
    pub const RTS_SECONDARY: u8 = 1;
    /// CTS sender will receive in half duplex.
    pub const CTS_HD: u8 = 0b00;
    /// CTS sender will transmit and receive in a two-node FD exchange.
    pub const CTS_TWO_NODE: u8 = 0b01;
    /// CTS sender will relay to a third node while receiving.
    pub const CTS_THREE_NODE: u8 = 0b10;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub src: usize,
    pub dst: usize,
    pub duplex: Duplex,
    pub work_mode: u8,
    /// 4-bit MCS field.
    pub mcs_mode: u8,
    /// Remaining transaction time after this frame, microseconds.
    pub duration_us: u16,
    /// MAC payload, DATA only.
    pub payload_bits: u64,
}

/// Size and airtime of an encoded frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncodedFrame {
    pub total_bits: u64,
    pub airtime: SimTime,
}

const ADDR_BITS: u32 = 48;
const FIELD_OFFSET: usize = 16 + 16 + 2 * ADDR_BITS as usize;

impl Frame {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            FrameKind::Rts => self.work_mode <= 1,
            FrameKind::Cts => matches!(self.work_mode, work::CTS_HD | work::CTS_TWO_NODE | work::CTS_THREE_NODE),
            FrameKind::Data | FrameKind::Ack => self.work_mode == 0,
        };
        if !ok {
            return Err(Error::Encoding(format!("illegal work mode {:#b} in {}", self.work_mode, self.kind.as_str())));
        }
        if self.mcs_mode > 0xF {
            return Err(Error::Encoding(format!("MCS field {} does not fit in 4 bits", self.mcs_mode)));
        }
        if self.kind != FrameKind::Data && self.payload_bits != 0 {
            return Err(Error::Encoding("control frames carry no payload".into()));
        }
        Ok(())
    }

    fn work_bits(&self) -> u32 {
        if self.kind == FrameKind::Cts {
            2
        } else {
            1
        }
    }

    /// Bits of the MAC header (the whole frame for control frames).
    pub fn header_bits(&self, timing: &MacTiming) -> u64 {
        match self.kind {
            FrameKind::Rts => timing.rts_bits,
            FrameKind::Cts => timing.cts_bits,
            FrameKind::Ack => timing.ack_bits,
            FrameKind::Data => timing.mac_header_bits,
        }
    }

    /// Serialises the MAC header into bytes (MSB first, zero padded).
    pub fn header_to_bits(&self, timing: &MacTiming) -> Result<Vec<u8>> {
        self.validate()?;
        let len = self.header_bits(timing) as usize;
        let mut w = BitWriter::new(len);
        let (ty, sub) = self.kind.subtype_bits();
        w.put(0, 2); // protocol version
        w.put(ty as u64, 2);
        w.put(sub as u64, 4);
        w.put(0, 8); // flags
        w.put(self.duration_us as u64, 16);
        w.put(self.dst as u64, ADDR_BITS);
        w.put(self.src as u64, ADDR_BITS);
        w.put(self.duplex as u64, 1);
        w.put(self.work_mode as u64, self.work_bits());
        w.put(self.mcs_mode as u64, 4);
        Ok(w.finish())
    }

    /// Parses a header produced by [`Frame::header_to_bits`]. DATA payload
    /// length is not part of the header and must be supplied.
    pub fn header_from_bits(bytes: &[u8], payload_bits: u64) -> Result<Frame> {
        let mut r = BitReader::new(bytes);
        let _version = r.get(2)?;
        let ty = r.get(2)? as u8;
        let sub = r.get(4)? as u8;
        let kind = FrameKind::from_type_bits(ty, sub)
            .ok_or_else(|| Error::Encoding(format!("unknown frame type {ty:#b}/{sub:#b}")))?;
        let _flags = r.get(8)?;
        let duration_us = r.get(16)? as u16;
        let dst = r.get(ADDR_BITS)? as usize;
        let src = r.get(ADDR_BITS)? as usize;
        debug_assert_eq!(r.pos, FIELD_OFFSET);
        let duplex = if r.get(1)? == 1 { Duplex::Full } else { Duplex::Half };
        let work_mode = r.get(if kind == FrameKind::Cts { 2 } else { 1 })? as u8;
        let mcs_mode = r.get(4)? as u8;
        let frame = Frame {
            kind,
            src,
            dst,
            duplex,
            work_mode,
            mcs_mode,
            duration_us,
            payload_bits: if kind == FrameKind::Data { payload_bits } else { 0 },
        };
        frame.validate()?;
        Ok(frame)
    }
}

/// Total on-air MAC bits and airtime of `frame`. DATA frames are sent at the
/// rate of the MCS named in their MCS field.
pub fn encode_frame(frame: &Frame, timing: &MacTiming, mcs: &McsTable) -> Result<EncodedFrame> {
    frame.validate()?;
    let header = frame.header_bits(timing);
    if frame.kind.is_control() {
        return Ok(EncodedFrame { total_bits: header, airtime: timing.control_airtime(header) });
    }
    let entry = mcs
        .by_index(frame.mcs_mode)
        .ok_or_else(|| Error::Encoding(format!("MCS {} not in the rate table", frame.mcs_mode)))?;
    Ok(EncodedFrame {
        total_bits: header + frame.payload_bits,
        airtime: timing.data_airtime(frame.payload_bits, entry.data_rate_bps),
    })
}

struct BitWriter {
    buf: Vec<u8>,
    pos: usize,
}

impl BitWriter {
    fn new(bits: usize) -> Self {
        BitWriter { buf: vec![0; bits.div_ceil(8)], pos: 0 }
    }

    fn put(&mut self, value: u64, bits: u32) {
        for i in (0..bits).rev() {
            if (value >> i) & 1 == 1 {
                self.buf[self.pos / 8] |= 0x80 >> (self.pos % 8);
            }
            self.pos += 1;
        }
    }

    fn finish(self) -> Vec<u8> {
        self.buf
    }
}

struct BitReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        BitReader { buf, pos: 0 }
    }

    fn get(&mut self, bits: u32) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..bits {
            let byte = *self
                .buf
                .get(self.pos / 8)
                .ok_or_else(|| Error::Encoding("truncated frame".into()))?;
            v = (v << 1) | ((byte >> (7 - self.pos % 8)) & 1) as u64;
            self.pos += 1;
        }
        Ok(v)
    }
}
