from hopper_stiffness import config  # noqa: F401
