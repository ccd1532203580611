class Box:
    """A box."""

    def area(self) -> int:
        return self.w * self.h


def scale(box, k):
    # multiply sides
    return Box(box.w * k, box.h * k)
# trailing note
