/** Snapshot-based undo/redo stack (the studio guarantees at least 20 levels). */

export class UndoStack<T> {
  private states: T[] = [];
  private index = -1;
  private readonly limit: number;

  constructor(initial: T, limit = 50) {
    if (limit < 20) throw new Error("undo depth must be >= 20");
    this.limit = limit;
    this.states = [initial];
    this.index = 0;
  }

  get current(): T {
    return this.states[this.index];
  }

  push(state: T): void {
    this.states = this.states.slice(0, this.index + 1);
    this.states.push(state);
    if (this.states.length > this.limit + 1) {
      this.states.shift();
    }
    this.index = this.states.length - 1;
  }

  canUndo(): boolean {
    return this.index > 0;
  }

  canRedo(): boolean {
    return this.index < this.states.length - 1;
  }

  undo(): T | null {
    if (!this.canUndo()) return null;
    this.index -= 1;
    return this.states[this.index];
  }

  redo(): T | null {
    if (!this.canRedo()) return null;
    this.index += 1;
    return this.states[this.index];
  }
}
