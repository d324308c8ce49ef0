//! MAC-layer building blocks: timing constants, frame codec, busy tones and
//! the contention window.

mod contention;
mod frame;
mod timing;
mod tone;

pub use contention::ContentionWindow;
pub use frame::{encode_frame, work, Duplex, EncodedFrame, Frame, FrameKind};
pub use timing::MacTiming;
pub use tone::{ToneBoard, TxnId};
