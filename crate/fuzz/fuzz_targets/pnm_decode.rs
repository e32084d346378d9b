#![no_main]

use libfuzzer_sys::fuzz_target;
use pixelpolicy::image::Image;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = Image::decode_pnm(data) {
        let bytes = img.encode_pnm().expect("decoded image encodes");
        assert_eq!(Image::decode_pnm(&bytes).expect("encoded image decodes"), img);
    }
});
