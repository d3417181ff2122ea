def main():
    """Main entry point for ncdetect."""
    from ncdetect.api.cli import app

    app(prog_name="ncdetect")


if __name__ == "__main__":
    main()
