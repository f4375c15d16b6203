"""Regenerate the bundled toy corpus and lexicon (deterministic)."""

import random
from pathlib import Path

OUT = Path(__file__).resolve().parent / "toy"

WORDS = [
    "nghiên cứu viên", "sinh viên", "đại học", "Việt Nam", "Hà Nội", "thành phố",
    "giáo viên", "học sinh", "bệnh viện", "bác sĩ", "công ty", "kinh tế", "xã hội",
    "văn hóa", "lịch sử", "khoa học", "công nghệ", "máy tính", "điện thoại",
    "nông dân", "thời tiết", "mùa mưa", "mùa khô", "gia đình", "bạn bè", "chính phủ",
    "quốc hội", "ngân hàng", "thị trường", "sản phẩm", "khách hàng", "người dân",
    "trường học", "thư viện", "bóng đá", "âm nhạc", "điện ảnh", "du lịch",
    "hợp tác xã", "ủy ban nhân dân", "bảo tàng", "giao thông", "xe buýt", "sân bay",
    "phát triển", "nghiên cứu", "tham gia", "tổ chức", "quản lý", "xây dựng",
    "chuẩn bị", "giải quyết", "bảo vệ", "hỗ trợ", "thông tin", "báo chí",
]
SINGLES = (
    "tôi anh chị em ông bà họ chúng ta là có và của cho với trong ngoài đã đang sẽ "
    "rất nhiều ít mới cũ lớn nhỏ đẹp tốt xấu nhanh chậm đi về làm học ăn uống nói "
    "viết đọc xem nghe mua bán ở tại từ đến khi nếu thì nhưng vì nên cũng vẫn còn "
    "được bị này kia đó nào gì ai một hai ba bốn năm sáu bảy tám chín mười người "
    "nhà cửa sông núi biển trời đất cây hoa lúa gạo cá thịt rau quả sáng trưa chiều tối"
).split()
NAMES = ["Nguyễn Văn An", "Trần Thị Bình", "Lê Minh", "Phạm Hùng", "Hoàng Lan"]
ABBR = ["TP.", "TS.", "ThS.", "PGS."]
END = [".", ".", ".", "!", "?"]


def sentence(rng):
    n = rng.randint(6, 18)
    toks = []
    for _ in range(n):
        r = rng.random()
        if r < 0.35:
            toks.append(rng.choice(WORDS))
        elif r < 0.93:
            toks.append(rng.choice(SINGLES))
        elif r < 0.97:
            toks.append(rng.choice(ABBR) + " " + rng.choice(NAMES))
        else:
            toks.append(str(rng.randint(1, 2024)))
    if rng.random() < 0.3:
        k = rng.randrange(1, len(toks))
        toks[k - 1] += ","
    s = " ".join(toks)
    s = s[0].upper() + s[1:]
    return s + rng.choice(END)


def document(rng):
    return " ".join(sentence(rng) for _ in range(rng.randint(3, 9)))


def main():
    rng = random.Random(20201)
    docs = []
    while sum(len(d.encode()) + 2 for d in docs) < 1_000_000:
        r = rng.random()
        if docs and r < 0.04:
            docs.append(rng.choice(docs))
        elif docs and r < 0.08:
            toks = rng.choice(docs).split(" ")
            toks[rng.randrange(len(toks))] = rng.choice(SINGLES)
            docs.append(" ".join(toks))
        elif r < 0.085:
            docs.append(document(rng).replace(" ", " file_name ", 1))
        else:
            docs.append(document(rng))
    OUT.mkdir(exist_ok=True)
    (OUT / "corpus.txt").write_text("\n\n".join(docs) + "\n", encoding="utf-8")
    lex = sorted(set(WORDS) | {n for n in NAMES})
    (OUT / "lexicon.txt").write_text("\n".join(lex) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
