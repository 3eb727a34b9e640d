"""
Reading the Software tag
========================

Processing software often records itself in the EXIF Software tag, which is
a cheap first hint that a photo went through a pipeline that adds a watermark.
"""

import io
import sys

import numpy as np
from PIL import Image

from prnu_nua.errors import ExifParseError
from prnu_nua.exif import read_software_tag, read_software_tag_file

if len(sys.argv) > 1:
    for path in sys.argv[1:]:
        try:
            print(path, read_software_tag_file(path))
        except (OSError, ExifParseError) as exc:
            print(path, "error:", exc)
    sys.exit()

# Without arguments, build two JPEGs in memory.
for software in ("Adobe Photoshop Lightroom Classic 9.2 (Windows)", None):
    buf = io.BytesIO()
    img = Image.fromarray(np.zeros((8, 8), dtype=np.uint8))
    if software:
        exif = Image.Exif()
        exif[0x0131] = software
        img.save(buf, format="JPEG", exif=exif)
    else:
        img.save(buf, format="JPEG")
    print(read_software_tag(buf.getvalue()))

# Damaged files fail with the offset where parsing stopped.
try:
    read_software_tag(b"\xff\xd8\xff\xe1\x40\x00Exif\x00\x00II")
except ExifParseError as exc:
    print(f"{type(exc).__name__} at offset {exc.offset}: {exc}")
