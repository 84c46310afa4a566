#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cisod/image.hpp"

// Minimal PNG codec: 8-bit gray/RGB/RGBA, non-interlaced. Writing uses
// stored (uncompressed) deflate blocks; reading implements full inflate
// (stored, fixed and dynamic Huffman) so third-party encoder output can be
// loaded too.

namespace cisod {

namespace {

std::uint32_t crc_table[256];
bool crc_table_ready = false;

void init_crc() {
  if (crc_table_ready) return;
  for (std::uint32_t n = 0; n < 256; ++n) {
    std::uint32_t c = n;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    crc_table[n] = c;
  }
  crc_table_ready = true;
}

std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t crc = 0) {
  init_crc();
  crc ^= 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i) crc = crc_table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

std::uint32_t adler32(const std::uint8_t* data, std::size_t len) {
  std::uint32_t a = 1, b = 0;
  for (std::size_t i = 0; i < len; ++i) {
    a = (a + data[i]) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void write_chunk(std::vector<std::uint8_t>& out, const char type[4],
                 const std::vector<std::uint8_t>& payload) {
  put_be32(out, static_cast<std::uint32_t>(payload.size()));
  std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  put_be32(out, crc32(out.data() + start, out.size() - start));
}

// ---------------- inflate ----------------

struct BitReader {
  const std::uint8_t* data;
  std::size_t len;
  std::size_t pos = 0;
  std::uint32_t bitbuf = 0;
  int bitcnt = 0;

  std::uint32_t bits(int n) {
    while (bitcnt < n) {
      if (pos >= len) throw std::runtime_error("png: truncated deflate stream");
      bitbuf |= static_cast<std::uint32_t>(data[pos++]) << bitcnt;
      bitcnt += 8;
    }
    std::uint32_t v = bitbuf & ((1u << n) - 1u);
    bitbuf >>= n;
    bitcnt -= n;
    return v;
  }
  void align_byte() {
    bitbuf = 0;
    bitcnt = 0;
  }
};

struct Huffman {
  // canonical code table: symbol lookup by walking bits
  std::vector<int> counts;   // counts[len]
  std::vector<int> symbols;  // symbols sorted by code

  void build(const std::vector<int>& lengths) {
    counts.assign(16, 0);
    for (int l : lengths)
      if (l) counts[static_cast<std::size_t>(l)]++;
    std::vector<int> offs(16, 0);
    for (int l = 1; l < 15; ++l) offs[static_cast<std::size_t>(l + 1)] =
        offs[static_cast<std::size_t>(l)] + counts[static_cast<std::size_t>(l)];
    symbols.assign(lengths.size(), 0);
    for (std::size_t s = 0; s < lengths.size(); ++s)
      if (lengths[s]) symbols[static_cast<std::size_t>(offs[static_cast<std::size_t>(lengths[s])]++)] =
          static_cast<int>(s);
  }

  int decode(BitReader& br) const {
    int code = 0, first = 0, index = 0;
    for (int l = 1; l <= 15; ++l) {
      code |= static_cast<int>(br.bits(1));
      const int count = counts[static_cast<std::size_t>(l)];
      if (code - first < count) return symbols[static_cast<std::size_t>(index + (code - first))];
      index += count;
      first = (first + count) << 1;
      code <<= 1;
    }
    throw std::runtime_error("png: invalid huffman code");
  }
};

const int kLenBase[29] = {3,  4,  5,  6,  7,  8,  9,  10, 11,  13,  15,  17,  19,  23, 27,
                          31, 35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258};
const int kLenExtra[29] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2,
                           2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
const int kDistBase[30] = {1,    2,    3,    4,    5,    7,     9,     13,    17,  25,
                           33,   49,   65,   97,   129,  193,   257,   385,   513, 769,
                           1025, 1537, 2049, 3073, 4097, 6145,  8193,  12289, 16385, 24577};
const int kDistExtra[30] = {0, 0, 0, 0, 1, 1, 2, 2,  3,  3,  4,  4,  5,  5,  6,
                            6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};

std::vector<std::uint8_t> inflate(const std::uint8_t* data, std::size_t len) {
  BitReader br{data, len};
  std::vector<std::uint8_t> out;
  Huffman fixed_lit, fixed_dist;
  {
    std::vector<int> ll(288);
    for (int i = 0; i < 144; ++i) ll[static_cast<std::size_t>(i)] = 8;
    for (int i = 144; i < 256; ++i) ll[static_cast<std::size_t>(i)] = 9;
    for (int i = 256; i < 280; ++i) ll[static_cast<std::size_t>(i)] = 7;
    for (int i = 280; i < 288; ++i) ll[static_cast<std::size_t>(i)] = 8;
    fixed_lit.build(ll);
    fixed_dist.build(std::vector<int>(30, 5));
  }
  bool final_block = false;
  while (!final_block) {
    final_block = br.bits(1) != 0;
    const std::uint32_t type = br.bits(2);
    if (type == 0) {
      br.align_byte();
      if (br.pos + 4 > br.len) throw std::runtime_error("png: truncated stored block");
      const std::uint32_t n = br.data[br.pos] | (static_cast<std::uint32_t>(br.data[br.pos + 1]) << 8);
      br.pos += 4;
      if (br.pos + n > br.len) throw std::runtime_error("png: truncated stored data");
      out.insert(out.end(), br.data + br.pos, br.data + br.pos + n);
      br.pos += n;
    } else if (type == 1 || type == 2) {
      Huffman lit, dist;
      if (type == 1) {
        lit = fixed_lit;
        dist = fixed_dist;
      } else {
        const int hlit = static_cast<int>(br.bits(5)) + 257;
        const int hdist = static_cast<int>(br.bits(5)) + 1;
        const int hclen = static_cast<int>(br.bits(4)) + 4;
        static const int ord[19] = {16, 17, 18, 0, 8, 7, 9, 6, 10, 5, 11, 4, 12, 3, 13, 2, 14, 1, 15};
        std::vector<int> cl(19, 0);
        for (int i = 0; i < hclen; ++i) cl[static_cast<std::size_t>(ord[i])] = static_cast<int>(br.bits(3));
        Huffman clh;
        clh.build(cl);
        std::vector<int> lengths;
        lengths.reserve(static_cast<std::size_t>(hlit + hdist));
        while (static_cast<int>(lengths.size()) < hlit + hdist) {
          const int sym = clh.decode(br);
          if (sym < 16) {
            lengths.push_back(sym);
          } else if (sym == 16) {
            if (lengths.empty()) throw std::runtime_error("png: bad code lengths");
            const int rep = 3 + static_cast<int>(br.bits(2));
            lengths.insert(lengths.end(), static_cast<std::size_t>(rep), lengths.back());
          } else if (sym == 17) {
            const int rep = 3 + static_cast<int>(br.bits(3));
            lengths.insert(lengths.end(), static_cast<std::size_t>(rep), 0);
          } else {
            const int rep = 11 + static_cast<int>(br.bits(7));
            lengths.insert(lengths.end(), static_cast<std::size_t>(rep), 0);
          }
        }
        lit.build(std::vector<int>(lengths.begin(), lengths.begin() + hlit));
        dist.build(std::vector<int>(lengths.begin() + hlit, lengths.end()));
      }
      for (;;) {
        const int sym = lit.decode(br);
        if (sym < 256) {
          out.push_back(static_cast<std::uint8_t>(sym));
        } else if (sym == 256) {
          break;
        } else {
          const int li = sym - 257;
          if (li >= 29) throw std::runtime_error("png: bad length symbol");
          const int length = kLenBase[li] + static_cast<int>(br.bits(kLenExtra[li]));
          const int ds = dist.decode(br);
          if (ds >= 30) throw std::runtime_error("png: bad distance symbol");
          const int distv = kDistBase[ds] + static_cast<int>(br.bits(kDistExtra[ds]));
          if (static_cast<std::size_t>(distv) > out.size())
            throw std::runtime_error("png: distance too far back");
          std::size_t from = out.size() - static_cast<std::size_t>(distv);
          for (int i = 0; i < length; ++i) out.push_back(out[from + static_cast<std::size_t>(i)]);
        }
      }
    } else {
      throw std::runtime_error("png: invalid block type");
    }
  }
  return out;
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

void write_png(const std::string& path, const ImageU8& img) {
  check(img.c == 1 || img.c == 3, "write_png: channels must be 1 or 3");
  check(img.w > 0 && img.h > 0, "write_png: empty image");
  std::vector<std::uint8_t> out;
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  out.insert(out.end(), sig, sig + 8);

  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(img.w));
  put_be32(ihdr, static_cast<std::uint32_t>(img.h));
  ihdr.push_back(8);                                    // bit depth
  ihdr.push_back(img.c == 1 ? 0 : 2);                   // color type
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);                                    // no interlace
  write_chunk(out, "IHDR", ihdr);

  // raw scanlines, filter byte 0 per row
  const std::size_t stride = static_cast<std::size_t>(img.w) * img.c;
  std::vector<std::uint8_t> raw;
  raw.reserve((stride + 1) * static_cast<std::size_t>(img.h));
  for (int y = 0; y < img.h; ++y) {
    raw.push_back(0);
    const std::uint8_t* row = img.pix.data() + static_cast<std::size_t>(y) * stride;
    raw.insert(raw.end(), row, row + stride);
  }

  // zlib wrapper with stored deflate blocks
  std::vector<std::uint8_t> z;
  z.push_back(0x78);
  z.push_back(0x01);
  std::size_t off = 0;
  while (off < raw.size()) {
    const std::size_t n = std::min<std::size_t>(65535, raw.size() - off);
    const bool last = (off + n == raw.size());
    z.push_back(last ? 1 : 0);
    z.push_back(static_cast<std::uint8_t>(n & 0xff));
    z.push_back(static_cast<std::uint8_t>(n >> 8));
    z.push_back(static_cast<std::uint8_t>(~n & 0xff));
    z.push_back(static_cast<std::uint8_t>((~n >> 8) & 0xff));
    z.insert(z.end(), raw.begin() + static_cast<std::ptrdiff_t>(off),
             raw.begin() + static_cast<std::ptrdiff_t>(off + n));
    off += n;
  }
  put_be32(z, adler32(raw.data(), raw.size()));
  write_chunk(out, "IDAT", z);
  write_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  check(static_cast<bool>(f), "write_png: cannot open " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  check(static_cast<bool>(f), "write_png: write failed " + path);
}

static std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(static_cast<bool>(f), "read_png: cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f),
                                   std::istreambuf_iterator<char>());
}

bool png_dims(const std::string& path, int& w, int& h) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return false;
  std::uint8_t head[33];
  f.read(reinterpret_cast<char*>(head), 33);
  if (f.gcount() < 33) return false;
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  if (std::memcmp(head, sig, 8) != 0) return false;
  if (std::memcmp(head + 12, "IHDR", 4) != 0) return false;
  w = static_cast<int>(get_be32(head + 16));
  h = static_cast<int>(get_be32(head + 20));
  return true;
}

ImageU8 read_png(const std::string& path) {
  const std::vector<std::uint8_t> file = read_file(path);
  check(file.size() > 8, "read_png: too small " + path);
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  check(std::memcmp(file.data(), sig, 8) == 0, "read_png: not a png " + path);

  int w = 0, h = 0, bit_depth = 0, color_type = 0, interlace = 0;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  while (pos + 8 <= file.size()) {
    const std::uint32_t len = get_be32(file.data() + pos);
    const char* type = reinterpret_cast<const char*>(file.data() + pos + 4);
    const std::uint8_t* payload = file.data() + pos + 8;
    check(pos + 12 + len <= file.size(), "read_png: truncated chunk in " + path);
    if (std::memcmp(type, "IHDR", 4) == 0) {
      w = static_cast<int>(get_be32(payload));
      h = static_cast<int>(get_be32(payload + 4));
      bit_depth = payload[8];
      color_type = payload[9];
      interlace = payload[12];
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  check(w > 0 && h > 0, "read_png: bad dimensions in " + path);
  check(bit_depth == 8, "read_png: only 8-bit supported: " + path);
  check(color_type == 0 || color_type == 2 || color_type == 6,
        "read_png: unsupported color type in " + path);
  check(interlace == 0, "read_png: interlaced png unsupported: " + path);
  check(idat.size() > 2, "read_png: missing image data in " + path);

  const int nch = (color_type == 0) ? 1 : (color_type == 2 ? 3 : 4);
  // skip the 2-byte zlib header; trailing adler is ignored by inflate
  std::vector<std::uint8_t> raw = inflate(idat.data() + 2, idat.size() - 2);
  const std::size_t stride = static_cast<std::size_t>(w) * static_cast<std::size_t>(nch);
  check(raw.size() >= (stride + 1) * static_cast<std::size_t>(h), "read_png: short data " + path);

  // undo per-row filters
  std::vector<std::uint8_t> flat(stride * static_cast<std::size_t>(h));
  const int bpp = nch;
  for (int y = 0; y < h; ++y) {
    const std::uint8_t filter = raw[(stride + 1) * static_cast<std::size_t>(y)];
    const std::uint8_t* src = raw.data() + (stride + 1) * static_cast<std::size_t>(y) + 1;
    std::uint8_t* dst = flat.data() + stride * static_cast<std::size_t>(y);
    const std::uint8_t* up = (y > 0) ? flat.data() + stride * static_cast<std::size_t>(y - 1) : nullptr;
    for (std::size_t x = 0; x < stride; ++x) {
      const int a = (x >= static_cast<std::size_t>(bpp)) ? dst[x - static_cast<std::size_t>(bpp)] : 0;
      const int b = up ? up[x] : 0;
      const int cdiag =
          (up && x >= static_cast<std::size_t>(bpp)) ? up[x - static_cast<std::size_t>(bpp)] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, cdiag); break;
        default: throw std::runtime_error("read_png: bad filter in " + path);
      }
      dst[x] = static_cast<std::uint8_t>(v & 0xff);
    }
  }

  ImageU8 img = ImageU8::make(w, h, nch == 4 ? 3 : nch);
  if (nch == 4) {  // drop alpha
    for (std::size_t i = 0, j = 0; i < flat.size(); i += 4, j += 3) {
      img.pix[j] = flat[i];
      img.pix[j + 1] = flat[i + 1];
      img.pix[j + 2] = flat[i + 2];
    }
  } else {
    img.pix = std::move(flat);
  }
  return img;
}

}  // namespace cisod
