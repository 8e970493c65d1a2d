//! Cascade fixtures shipped with the crate.

use vpc_core::haar::CascadeModel;

use crate::cascade_xml::{parse_cascade, CascadeXmlError};

/// OpenCV's pretrained stump-based frontal face cascade (24×24).
pub const FRONTAL_FACE_XML: &str = include_str!("../cascades/haarcascade_frontalface_default.xml");
/// OpenCV's pretrained stump-based eye cascade (20×20).
pub const EYE_XML: &str = include_str!("../cascades/haarcascade_eye.xml");
/// Hand-written three-stage cascade used by tests.
pub const MINI_XML: &str = include_str!("../cascades/mini_3stage.xml");
/// The mini cascade in the legacy layout.
pub const MINI_LEGACY_XML: &str = include_str!("../cascades/mini_3stage_legacy.xml");

pub fn frontal_face() -> Result<CascadeModel, CascadeXmlError> {
    parse_cascade(FRONTAL_FACE_XML)
}

pub fn eye() -> Result<CascadeModel, CascadeXmlError> {
    parse_cascade(EYE_XML)
}

pub fn mini() -> Result<CascadeModel, CascadeXmlError> {
    parse_cascade(MINI_XML)
}
