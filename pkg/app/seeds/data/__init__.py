# Seed data package
