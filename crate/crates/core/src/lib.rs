pub mod certcheck;
pub mod poly;
pub mod sdp;
pub mod sos;
pub mod synthesis;
pub mod system;
