//! Internet checksum (RFC 1071) over byte regions.

/// Ones'-complement sum of big-endian 16-bit words, folded to 16 bits. An odd
/// trailing byte is padded with zero.
pub fn ones_complement_sum(data: &[u8]) -> u16 {
    let mut sum: u32 = 0;
    let mut chunks = data.chunks_exact(2);
    for w in &mut chunks {
        sum += u16::from_be_bytes([w[0], w[1]]) as u32;
        // fold eagerly so the accumulator never overflows on long regions
        sum = (sum & 0xffff) + (sum >> 16);
    }
    if let [last] = chunks.remainder() {
        sum += (*last as u32) << 8;
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    sum as u16
}

/// The value to store in a checksum field: the complement of the sum.
pub fn internet_checksum(data: &[u8]) -> u16 {
    !ones_complement_sum(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_region() {
        assert_eq!(internet_checksum(&[0; 20]), 0xffff);
    }

    #[test]
    fn rfc1071_example() {
        // RFC 1071 section 3 example words
        let data = [0x00, 0x01, 0xf2, 0x03, 0xf4, 0xf5, 0xf6, 0xf7];
        assert_eq!(ones_complement_sum(&data), 0xddf2);
    }

    #[test]
    fn odd_length_pads() {
        assert_eq!(ones_complement_sum(&[0x12]), 0x1200);
    }
}
