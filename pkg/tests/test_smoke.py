"""Smoke test: package and CLI import."""


def test_import():
    import phononet  # noqa: F401


def test_cli_entrypoint():
    from phononet.cli import build_parser, main

    assert callable(main)
    assert build_parser().prog
